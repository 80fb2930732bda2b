#include "credo/effects.hpp"

#include <json.hpp>

#include <cmath>
#include <stdexcept>

namespace credo::effects {

using nlohmann::json;

DiffModel mlp_model(const nn::MlpSpec& spec, Vector params) {
    spec.validate();
    if (spec.output_width() != 1 || spec.head != nn::Head::Regression) {
        throw std::invalid_argument("mlp_model: effects require a scalar regression head");
    }
    if (params.size() != spec.param_count()) {
        throw std::invalid_argument("mlp_model: expected " + std::to_string(spec.param_count()) +
                                    " params, found " + std::to_string(params.size()));
    }
    return [spec, params = std::move(params)](ad::Graph& graph, const ad::Tensor& x) {
        std::vector<ad::Tensor> pnodes;
        long offset = 0;
        for (int l = 0; l + 1 < static_cast<int>(spec.widths.size()); ++l) {
            const int rows = spec.widths[static_cast<std::size_t>(l)];
            const int cols = spec.widths[static_cast<std::size_t>(l) + 1];
            Matrix w(rows, cols);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) w(i, j) = params(offset + i * cols + j);
            offset += static_cast<long>(rows) * cols;
            Matrix b(1, cols);
            for (int j = 0; j < cols; ++j) b(0, j) = params(offset + j);
            offset += cols;
            pnodes.push_back(graph.constant(std::move(w)));
            pnodes.push_back(graph.constant(std::move(b)));
        }
        return nn::mlp_forward(graph, spec, pnodes, x);
    };
}

namespace {

void check_feature(const Matrix& data, int feature) {
    if (data.rows() < 1) throw std::invalid_argument("effects: data must be non-empty");
    if (feature < 0 || feature >= data.cols()) {
        throw std::invalid_argument("effects: feature index " + std::to_string(feature) +
                                    " out of range for width " + std::to_string(data.cols()));
    }
}

/// Builds the clamped batch: column `feature` broadcast from the 1x1 leaf
/// `alpha`, every other column constant from `data`.
ad::Tensor assemble_clamped(ad::Graph& graph, const Matrix& data, int feature,
                            const ad::Tensor& alpha) {
    const int rows = static_cast<int>(data.rows());
    const int cols = static_cast<int>(data.cols());
    ad::Tensor column = ad::broadcast_scalar(alpha, rows, 1);
    ad::Tensor x = column;
    if (feature > 0) {
        x = ad::concat(graph.constant(data.leftCols(feature)), x);
    }
    if (feature + 1 < cols) {
        x = ad::concat(x, graph.constant(data.rightCols(cols - feature - 1)));
    }
    return x;
}

ad::Tensor model_mean(const DiffModel& model, ad::Graph& graph, const ad::Tensor& x) {
    ad::Tensor out = model(graph, x);
    if (out.cols() != 1 || out.rows() != x.rows()) {
        throw std::invalid_argument("effects: model must map B x D to B x 1");
    }
    return ad::mean(out);
}

}  // namespace

double interventional_expectation(const DiffModel& model, const Matrix& data, int feature,
                                  double alpha) {
    check_feature(data, feature);
    ad::Graph graph;
    ad::Tensor a = graph.input(Matrix::Constant(1, 1, alpha));
    return model_mean(model, graph, assemble_clamped(graph, data, feature, a)).scalar();
}

double acde(const DiffModel& model, const Matrix& data, int feature, double alpha, double alpha0) {
    return interventional_expectation(model, data, feature, alpha) -
           interventional_expectation(model, data, feature, alpha0);
}

double expected_gradient(const DiffModel& model, const Matrix& data, int feature, double alpha,
                         int order) {
    check_feature(data, feature);
    if (order != 1 && order != 2) {
        throw std::invalid_argument("expected_gradient: order must be 1 or 2, got " +
                                    std::to_string(order));
    }
    ad::Graph graph;
    ad::Tensor a = graph.input(Matrix::Constant(1, 1, alpha));
    ad::Tensor m = model_mean(model, graph, assemble_clamped(graph, data, feature, a));
    ad::Tensor g1 = graph.backward(m, {a})[0];
    if (order == 1) return g1.scalar();
    return graph.backward(g1, {a})[0].scalar();
}

double default_baseline(const Matrix& data, int feature) {
    check_feature(data, feature);
    return data.col(feature).mean();
}

IdentityReport verify_acde_identity(const DiffModel& model, const Matrix& data, int feature,
                                    const Vector& grid, int order) {
    check_feature(data, feature);
    if (grid.size() < 5) {
        throw std::invalid_argument("verify_acde_identity: grid needs >= 5 points, got " +
                                    std::to_string(grid.size()));
    }
    const double h = grid(1) - grid(0);
    if (!(h > 0.0)) throw std::invalid_argument("verify_acde_identity: grid must be increasing");
    for (Eigen::Index k = 1; k + 1 < grid.size(); ++k) {
        if (std::abs((grid(k + 1) - grid(k)) - h) > 1e-9 * std::max(1.0, std::abs(h))) {
            throw std::invalid_argument("verify_acde_identity: grid must be uniformly spaced");
        }
    }

    IdentityReport report;
    report.feature = feature;
    report.order = order;
    report.baseline = default_baseline(data, feature);
    report.grid = grid;
    report.acde_curve.resize(grid.size());
    report.expected_gradients.resize(grid.size());
    const double base_ie = interventional_expectation(model, data, feature, report.baseline);
    for (Eigen::Index k = 0; k < grid.size(); ++k) {
        report.acde_curve(k) =
            interventional_expectation(model, data, feature, grid(k)) - base_ie;
        report.expected_gradients(k) = expected_gradient(model, data, feature, grid(k), order);
    }

    report.fd_curve.resize(grid.size() - 2);
    double dev = 0.0;
    for (Eigen::Index k = 1; k + 1 < grid.size(); ++k) {
        const double fd =
            order == 1
                ? (report.acde_curve(k + 1) - report.acde_curve(k - 1)) / (2.0 * h)
                : (report.acde_curve(k + 1) - 2.0 * report.acde_curve(k) + report.acde_curve(k - 1)) /
                      (h * h);
        report.fd_curve(k - 1) = fd;
        dev = std::max(dev, std::abs(fd - report.expected_gradients(k)));
    }
    report.max_deviation = dev;
    const double curve_scale = report.acde_curve.cwiseAbs().maxCoeff();
    report.tolerance = std::max(1e-4, 1e-3 * curve_scale);
    report.pass = dev < report.tolerance;
    return report;
}

std::string identity_report_to_json(const IdentityReport& report) {
    json j;
    j["feature"] = report.feature;
    j["order"] = report.order;
    j["baseline"] = report.baseline;
    j["grid"] = std::vector<double>(report.grid.begin(), report.grid.end());
    j["acde_curve"] = std::vector<double>(report.acde_curve.begin(), report.acde_curve.end());
    j["expected_gradients"] =
        std::vector<double>(report.expected_gradients.begin(), report.expected_gradients.end());
    j["fd_curve"] = std::vector<double>(report.fd_curve.begin(), report.fd_curve.end());
    j["identity_deviation"] = report.max_deviation;
    j["tolerance"] = report.tolerance;
    j["pass"] = report.pass;
    return j.dump(2);
}

void InputStructure::validate(int width) const {
    std::vector<char> has_relation(static_cast<std::size_t>(width), 0);
    for (const Relation& rel : relations) {
        if (rel.feature < 0 || rel.feature >= width) {
            throw std::invalid_argument("structure: feature " + std::to_string(rel.feature) +
                                        " out of range for width " + std::to_string(width));
        }
        if (has_relation[static_cast<std::size_t>(rel.feature)]) {
            throw std::invalid_argument("structure: duplicate relation for feature " +
                                        std::to_string(rel.feature));
        }
        has_relation[static_cast<std::size_t>(rel.feature)] = 1;
        for (const Term& t : rel.terms) {
            if (t.parent < 0 || t.parent >= width || t.parent == rel.feature) {
                throw std::invalid_argument("structure: bad parent " + std::to_string(t.parent) +
                                            " for feature " + std::to_string(rel.feature));
            }
        }
    }
    topo_order(width);  // throws on cycles
}

std::vector<int> InputStructure::topo_order(int width) const {
    std::vector<int> order;
    std::vector<char> state(static_cast<std::size_t>(width), 0);  // 0 new, 1 visiting, 2 done
    auto relation_of = [&](int f) -> const Relation* {
        for (const Relation& rel : relations)
            if (rel.feature == f) return &rel;
        return nullptr;
    };
    std::function<void(int)> visit = [&](int f) {
        if (state[static_cast<std::size_t>(f)] == 2) return;
        if (state[static_cast<std::size_t>(f)] == 1) {
            throw std::invalid_argument("structure: cycle through feature " + std::to_string(f));
        }
        state[static_cast<std::size_t>(f)] = 1;
        if (const Relation* rel = relation_of(f)) {
            for (const Term& t : rel->terms) visit(t.parent);
            order.push_back(f);
        }
        state[static_cast<std::size_t>(f)] = 2;
    };
    for (const Relation& rel : relations) visit(rel.feature);
    return order;
}

std::vector<char> InputStructure::downstream_of(int feature, int width) const {
    std::vector<char> down(static_cast<std::size_t>(width), 0);
    down[static_cast<std::size_t>(feature)] = 1;
    for (int f : topo_order(width)) {
        if (f == feature) continue;  // clamped: incoming relation severed
        for (const Relation& rel : relations) {
            if (rel.feature != f) continue;
            for (const Term& t : rel.terms) {
                if (down[static_cast<std::size_t>(t.parent)]) down[static_cast<std::size_t>(f)] = 1;
            }
        }
    }
    down[static_cast<std::size_t>(feature)] = 0;
    return down;
}

Matrix InputStructure::chain_derivatives(const Matrix& rows, int feature) const {
    const int width = static_cast<int>(rows.cols());
    Matrix deriv = Matrix::Zero(rows.rows(), width);
    deriv.col(feature).setOnes();
    for (int f : topo_order(width)) {
        if (f == feature) continue;
        for (const Relation& rel : relations) {
            if (rel.feature != f) continue;
            for (const Term& t : rel.terms) {
                const auto p = rows.col(t.parent).array();
                deriv.col(f) +=
                    ((t.c1 + 2.0 * t.c2 * p + 3.0 * t.c3 * p.square()) * deriv.col(t.parent).array())
                        .matrix();
            }
        }
    }
    return deriv;
}

InputStructure structure_from_json(const std::string& text) {
    json j = json::parse(text);
    InputStructure s;
    for (const json& rj : j.at("relations")) {
        InputStructure::Relation rel;
        rel.feature = rj.at("feature").get<int>();
        rel.intercept = rj.value("intercept", 0.0);
        for (const json& tj : rj.at("terms")) {
            InputStructure::Term t;
            t.parent = tj.at("parent").get<int>();
            t.c1 = tj.value("c1", 0.0);
            t.c2 = tj.value("c2", 0.0);
            t.c3 = tj.value("c3", 0.0);
            rel.terms.push_back(t);
        }
        s.relations.push_back(std::move(rel));
    }
    return s;
}

std::string structure_to_json(const InputStructure& structure) {
    json relations = json::array();
    for (const InputStructure::Relation& rel : structure.relations) {
        json terms = json::array();
        for (const InputStructure::Term& t : rel.terms) {
            terms.push_back({{"parent", t.parent}, {"c1", t.c1}, {"c2", t.c2}, {"c3", t.c3}});
        }
        relations.push_back(
            {{"feature", rel.feature}, {"intercept", rel.intercept}, {"terms", terms}});
    }
    return json{{"relations", relations}}.dump(2);
}

double total_gradient(const DiffModel& model, const Matrix& data, const InputStructure& structure,
                      int feature, double alpha) {
    check_feature(data, feature);
    const int width = static_cast<int>(data.cols());
    structure.validate(width);
    const int rows = static_cast<int>(data.rows());

    ad::Graph graph;
    ad::Tensor a = graph.input(Matrix::Constant(1, 1, alpha));
    std::vector<ad::Tensor> columns(static_cast<std::size_t>(width));
    for (int f = 0; f < width; ++f) {
        columns[static_cast<std::size_t>(f)] = graph.constant(data.col(f));
    }
    columns[static_cast<std::size_t>(feature)] = ad::broadcast_scalar(a, rows, 1);

    const std::vector<char> down = structure.downstream_of(feature, width);
    for (int f : structure.topo_order(width)) {
        if (!down[static_cast<std::size_t>(f)]) continue;
        for (const InputStructure::Relation& rel : structure.relations) {
            if (rel.feature != f) continue;
            ad::Tensor col = graph.constant(Matrix::Constant(rows, 1, rel.intercept));
            for (const InputStructure::Term& t : rel.terms) {
                const ad::Tensor& p = columns[static_cast<std::size_t>(t.parent)];
                if (t.c1 != 0.0) col = ad::add(col, ad::scale(p, t.c1));
                if (t.c2 != 0.0) col = ad::add(col, ad::scale(ad::square(p), t.c2));
                if (t.c3 != 0.0) col = ad::add(col, ad::scale(ad::mul(ad::square(p), p), t.c3));
            }
            columns[static_cast<std::size_t>(f)] = col;
        }
    }

    ad::Tensor x = columns[0];
    for (int f = 1; f < width; ++f) x = ad::concat(x, columns[static_cast<std::size_t>(f)]);
    ad::Tensor m = model_mean(model, graph, x);
    return graph.backward(m, {a})[0].scalar();
}

}  // namespace credo::effects
