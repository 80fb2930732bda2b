#include "credo/scm.hpp"

#include <json.hpp>

#include <cmath>
#include <set>
#include <stdexcept>

#include "credo/rng.hpp"

namespace credo::scm {

using nlohmann::json;

void ObservationSpec::materialize(int factor_count) {
    if (hidden <= 0 || dim <= 0) {
        throw std::invalid_argument("observation: hidden and dim must be positive");
    }
    Rng rng(derive_seed(coeff_seed, 0x0b5e));
    auto fill = [&](Matrix& m, int rows, int cols, double scale) {
        m.resize(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    };
    fill(w1, hidden, factor_count, 1.0 / std::sqrt(static_cast<double>(factor_count)));
    b1.resize(hidden);
    for (int i = 0; i < hidden; ++i) b1(i) = 0.2 * rng.normal();
    fill(w2, dim, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));
    b2.resize(dim);
    for (int i = 0; i < dim; ++i) b2(i) = 0.2 * rng.normal();
}

Vector ObservationSpec::apply(const Vector& factors) const {
    return w2 * (w1 * factors + b1).array().tanh().matrix() + b2;
}

void CausalGraph::validate() {
    std::set<std::string> seen;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const GraphNode& node = nodes[k];
        if (node.name.empty()) throw std::invalid_argument("graph: node with empty name");
        if (!seen.insert(node.name).second) {
            throw std::invalid_argument("graph: duplicate node '" + node.name + "'");
        }
        for (const std::string& p : node.parents) {
            if (!seen.count(p)) {
                throw std::invalid_argument("graph: parent '" + p + "' of '" + node.name +
                                            "' does not precede it (graph must be acyclic and "
                                            "topologically ordered)");
            }
        }
        if (node.fn.kind != StructuralFunction::Kind::CategoricalTable &&
            static_cast<std::size_t>(node.fn.weights.size()) != node.parents.size()) {
            throw std::invalid_argument("graph: node '" + node.name + "' has " +
                                        std::to_string(node.parents.size()) + " parents but " +
                                        std::to_string(node.fn.weights.size()) + " weights");
        }
        if (node.noise.kind == NoiseSpec::Kind::Gaussian && node.noise.sigma < 0.0) {
            throw std::invalid_argument("graph: node '" + node.name + "' has negative sigma");
        }
        if (node.noise.kind == NoiseSpec::Kind::Categorical) {
            if (std::abs(node.noise.probs.sum() - 1.0) > 1e-12) {
                throw std::invalid_argument("graph: categorical probabilities of '" + node.name +
                                            "' sum to " + std::to_string(node.noise.probs.sum()));
            }
        }
        if (node.fn.kind == StructuralFunction::Kind::CategoricalTable) {
            if (node.parents.size() != 1) {
                throw std::invalid_argument("graph: categorical-table node '" + node.name +
                                            "' needs exactly one parent");
            }
            for (Eigen::Index r = 0; r < node.fn.table.rows(); ++r) {
                if (std::abs(node.fn.table.row(r).sum() - 1.0) > 1e-12) {
                    throw std::invalid_argument("graph: table row " + std::to_string(r) + " of '" +
                                                node.name + "' does not sum to 1");
                }
            }
        }
    }
    for (const std::string& f : factor_names) {
        if (node_index(f) < 0) {
            throw std::invalid_argument("graph: factor '" + f + "' is not a node");
        }
    }
    if (observation) {
        if (factor_names.empty()) {
            throw std::invalid_argument("graph: observation map requires designated factors");
        }
        observation->materialize(static_cast<int>(factor_names.size()));
    }
}

int CausalGraph::node_index(const std::string& node_name) const {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (nodes[k].name == node_name) return static_cast<int>(k);
    }
    return -1;
}

int CausalGraph::factor_index(const std::string& node_name) const {
    for (std::size_t k = 0; k < factor_names.size(); ++k) {
        if (factor_names[k] == node_name) return static_cast<int>(k);
    }
    return -1;
}

bool CausalGraph::is_descendant(const std::string& ancestor, const std::string& node) const {
    const int a = node_index(ancestor);
    const int b = node_index(node);
    if (a < 0 || b < 0 || a == b) return false;
    std::vector<char> reach(nodes.size(), 0);
    reach[static_cast<std::size_t>(a)] = 1;
    for (std::size_t k = static_cast<std::size_t>(a) + 1; k < nodes.size(); ++k) {
        for (const std::string& p : nodes[k].parents) {
            if (reach[static_cast<std::size_t>(node_index(p))]) {
                reach[k] = 1;
                break;
            }
        }
    }
    return reach[static_cast<std::size_t>(b)] != 0;
}

std::vector<std::string> CausalGraph::confounder_names() const {
    std::vector<std::string> out;
    for (const GraphNode& node : nodes) {
        if (node.observed && factor_index(node.name) < 0) out.push_back(node.name);
    }
    return out;
}

int CausalGraph::component_count() const {
    return static_cast<int>(nodes.size()) + (observation ? 1 : 0);
}

namespace {

GraphNode root_gaussian(std::string name, double sigma, bool observed) {
    GraphNode n;
    n.name = std::move(name);
    n.noise.kind = NoiseSpec::Kind::Gaussian;
    n.noise.sigma = sigma;
    n.observed = observed;
    n.fn.weights = Vector();
    return n;
}

GraphNode linear_node(std::string name, std::vector<std::string> parents,
                      std::vector<double> weights, double sigma) {
    GraphNode n;
    n.name = std::move(name);
    n.parents = std::move(parents);
    n.fn.kind = StructuralFunction::Kind::Linear;
    n.fn.weights = Eigen::Map<Vector>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    n.noise.kind = NoiseSpec::Kind::Gaussian;
    n.noise.sigma = sigma;
    return n;
}

}  // namespace

CausalGraph candle_preset() {
    CausalGraph g;
    g.name = "candle";
    GraphNode u = root_gaussian("U", 1.0, false);
    g.nodes.push_back(u);
    g.nodes.push_back(root_gaussian("C1", 1.0, true));
    g.nodes.push_back(root_gaussian("C2", 1.0, true));
    g.nodes.push_back(linear_node("g_shape", {"U", "C1"}, {0.8, 0.6}, 0.5));
    g.nodes.push_back(linear_node("g_color", {"U", "C2"}, {0.8, 0.6}, 0.5));
    g.nodes.push_back(root_gaussian("g_size", 1.0, true));
    g.nodes.push_back(linear_node("g_background", {"C1", "C2"}, {0.6, 0.6}, 0.5));
    g.factor_names = {"g_shape", "g_color", "g_size", "g_background"};
    ObservationSpec obs;
    obs.hidden = 32;
    obs.dim = 16;
    obs.coeff_seed = 0x0ca7d1e5ULL;
    obs.noise_sigma = 0.05;
    g.observation = obs;
    g.validate();
    return g;
}

CausalGraph triangle_preset() {
    CausalGraph g;
    g.name = "triangle";
    g.nodes.push_back(root_gaussian("U", 1.0, false));
    g.nodes.push_back(linear_node("X", {"U"}, {1.0}, 1.0));
    g.nodes.push_back(linear_node("Y", {"X", "U"}, {1.0, 2.0}, 1.0));
    g.factor_names = {"X", "Y"};
    g.validate();
    return g;
}

CausalGraph regression_preset() {
    CausalGraph g;
    g.name = "regression";
    g.nodes.push_back(root_gaussian("x1", 0.04, true));
    g.nodes.push_back(root_gaussian("x2", 1.0, true));
    g.nodes.push_back(linear_node("y", {"x1", "x2"}, {2.0, 3.0}, 0.1));
    g.factor_names = {"x1", "x2", "y"};
    g.validate();
    return g;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"candle", "triangle", "regression"};
    return names;
}

CausalGraph make_preset(const std::string& name) {
    if (name == "candle") return candle_preset();
    if (name == "triangle") return triangle_preset();
    if (name == "regression") return regression_preset();
    std::string known;
    for (const std::string& p : preset_names()) known += (known.empty() ? "" : ", ") + p;
    throw std::invalid_argument("unknown preset '" + name + "' (available: " + known + ")");
}

namespace {

double draw_noise(const NoiseSpec& noise, Rng& rng) {
    switch (noise.kind) {
        case NoiseSpec::Kind::Gaussian:
            return noise.sigma * rng.normal();
        case NoiseSpec::Kind::Uniform:
            return rng.uniform(noise.lo, noise.hi);
        case NoiseSpec::Kind::Categorical: {
            const double u = rng.uniform01();
            double acc = 0.0;
            for (Eigen::Index k = 0; k < noise.probs.size(); ++k) {
                acc += noise.probs(k);
                if (u < acc) return static_cast<double>(k);
            }
            return static_cast<double>(noise.probs.size() - 1);
        }
    }
    return 0.0;
}

double categorical_from_table(const Matrix& table, double parent_code, Rng& rng) {
    auto row = static_cast<Eigen::Index>(parent_code);
    if (row < 0 || row >= table.rows()) {
        throw std::invalid_argument("categorical-table: parent code " +
                                    std::to_string(parent_code) + " outside table with " +
                                    std::to_string(table.rows()) + " rows");
    }
    const double u = rng.uniform01();
    double acc = 0.0;
    for (Eigen::Index k = 0; k < table.cols(); ++k) {
        acc += table(row, k);
        if (u < acc) return static_cast<double>(k);
    }
    return static_cast<double>(table.cols() - 1);
}

struct RowSample {
    Vector node_values;
    Vector observation;
};

RowSample sample_row(const CausalGraph& graph, std::uint64_t row_seed,
                     const std::map<int, double>& overrides) {
    RowSample out;
    out.node_values.resize(static_cast<Eigen::Index>(graph.nodes.size()));
    for (std::size_t k = 0; k < graph.nodes.size(); ++k) {
        if (auto it = overrides.find(static_cast<int>(k)); it != overrides.end()) {
            out.node_values(static_cast<Eigen::Index>(k)) = it->second;
            continue;
        }
        const GraphNode& node = graph.nodes[k];
        Rng rng(derive_seed(row_seed, k));
        double value = 0.0;
        switch (node.fn.kind) {
            case StructuralFunction::Kind::Linear:
            case StructuralFunction::Kind::LinearTanh: {
                double pre = node.fn.intercept;
                for (std::size_t p = 0; p < node.parents.size(); ++p) {
                    pre += node.fn.weights(static_cast<Eigen::Index>(p)) *
                           out.node_values(graph.node_index(node.parents[p]));
                }
                if (node.fn.kind == StructuralFunction::Kind::LinearTanh) pre = std::tanh(pre);
                value = pre + draw_noise(node.noise, rng);
                break;
            }
            case StructuralFunction::Kind::CategoricalTable: {
                const double code = out.node_values(graph.node_index(node.parents[0]));
                value = categorical_from_table(node.fn.table, code, rng);
                break;
            }
        }
        out.node_values(static_cast<Eigen::Index>(k)) = value;
    }
    if (graph.observation) {
        Vector g(static_cast<Eigen::Index>(graph.factor_names.size()));
        for (std::size_t f = 0; f < graph.factor_names.size(); ++f) {
            g(static_cast<Eigen::Index>(f)) = out.node_values(graph.node_index(graph.factor_names[f]));
        }
        Rng rng(derive_seed(row_seed, graph.nodes.size()));
        Vector eps(graph.observation->dim);
        for (int d = 0; d < graph.observation->dim; ++d) eps(d) = rng.normal();
        out.observation = graph.observation->apply(g) + graph.observation->noise_sigma * eps;
    }
    return out;
}

std::string describe(const std::vector<Intervention>& dos) {
    std::string s;
    for (const Intervention& d : dos) {
        if (!s.empty()) s += ";";
        s += "do(" + d.node + "=" + std::to_string(d.value) + ")";
    }
    return s;
}

Dataset sample_impl(const CausalGraph& graph, const std::vector<Intervention>& dos, long n,
                    std::uint64_t seed, const Dataset* shift_base = nullptr, int shift_factor = -1,
                    double shift_delta = 0.0) {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    std::map<int, double> overrides;
    for (const Intervention& d : dos) {
        const int idx = graph.node_index(d.node);
        if (idx < 0) {
            throw std::invalid_argument("intervention on unknown node '" + d.node +
                                        "' (the observation block cannot be intervened on)");
        }
        overrides[idx] = d.value;
    }
    int shift_node = -1;
    if (shift_base) {
        shift_node = graph.node_index(graph.factor_names.at(static_cast<std::size_t>(shift_factor)));
    }

    Dataset ds;
    ds.graph_name = graph.name;
    ds.seed = seed;
    ds.n = n;
    ds.intervention = describe(dos);
    ds.factor_names = graph.factor_names;
    ds.confounder_names = graph.confounder_names();
    const auto nf = static_cast<Eigen::Index>(ds.factor_names.size());
    const auto nc = static_cast<Eigen::Index>(ds.confounder_names.size());
    const Eigen::Index nd = graph.observation ? graph.observation->dim : 0;
    ds.factors.resize(n, nf);
    ds.confounders.resize(n, nc);
    ds.observations.resize(n, nd);

    std::vector<int> factor_idx(static_cast<std::size_t>(nf));
    for (Eigen::Index f = 0; f < nf; ++f)
        factor_idx[static_cast<std::size_t>(f)] = graph.node_index(ds.factor_names[static_cast<std::size_t>(f)]);
    std::vector<int> conf_idx(static_cast<std::size_t>(nc));
    for (Eigen::Index c = 0; c < nc; ++c)
        conf_idx[static_cast<std::size_t>(c)] = graph.node_index(ds.confounder_names[static_cast<std::size_t>(c)]);

    for (long r = 0; r < n; ++r) {
        if (shift_base) {
            overrides[shift_node] =
                shift_base->factors(r, static_cast<Eigen::Index>(shift_factor)) + shift_delta;
        }
        RowSample row = sample_row(graph, derive_seed(seed, 0x70b5, static_cast<std::uint64_t>(r)),
                                   overrides);
        for (Eigen::Index f = 0; f < nf; ++f)
            ds.factors(r, f) = row.node_values(factor_idx[static_cast<std::size_t>(f)]);
        for (Eigen::Index c = 0; c < nc; ++c)
            ds.confounders(r, c) = row.node_values(conf_idx[static_cast<std::size_t>(c)]);
        if (nd > 0) ds.observations.row(r) = row.observation.transpose();
    }
    return ds;
}

}  // namespace

Dataset sample_observational(const CausalGraph& graph, long n, std::uint64_t seed) {
    return sample_impl(graph, {}, n, seed);
}

Dataset sample_interventional(const CausalGraph& graph, const std::vector<Intervention>& dos,
                              long n, std::uint64_t seed) {
    return sample_impl(graph, dos, n, seed);
}

Dataset resample_shifted(const CausalGraph& graph, const Dataset& base, int factor, double delta) {
    if (factor < 0 || factor >= static_cast<int>(graph.factor_names.size())) {
        throw std::invalid_argument("resample_shifted: factor index " + std::to_string(factor) +
                                    " out of range");
    }
    Dataset ds = sample_impl(graph, {}, base.n, base.seed, &base, factor, delta);
    ds.intervention = "do(" + graph.factor_names[static_cast<std::size_t>(factor)] +
                      "+=" + std::to_string(delta) + ")";
    return ds;
}

EffectEstimate ground_truth_effect(const CausalGraph& graph, const std::string& target,
                                   const std::string& node, double alpha, double alpha0, long n,
                                   std::uint64_t seed) {
    const int target_idx = graph.node_index(target);
    const int node_idx = graph.node_index(node);
    if (target_idx < 0 || node_idx < 0) {
        throw std::invalid_argument("ground_truth_effect: unknown node '" +
                                    (target_idx < 0 ? target : node) + "'");
    }
    if (!graph.is_descendant(node, target)) {
        return {0.0, true};
    }
    double acc = 0.0;
    for (long r = 0; r < n; ++r) {
        const std::uint64_t row_seed = derive_seed(seed, 0x70b5, static_cast<std::uint64_t>(r));
        RowSample hi = sample_row(graph, row_seed, {{node_idx, alpha}});
        RowSample lo = sample_row(graph, row_seed, {{node_idx, alpha0}});
        acc += hi.node_values(target_idx) - lo.node_values(target_idx);
    }
    return {acc / static_cast<double>(n), false};
}

namespace {

json noise_to_json(const NoiseSpec& noise) {
    switch (noise.kind) {
        case NoiseSpec::Kind::Gaussian:
            return {{"kind", "gaussian"}, {"sigma", noise.sigma}};
        case NoiseSpec::Kind::Uniform:
            return {{"kind", "uniform"}, {"lo", noise.lo}, {"hi", noise.hi}};
        case NoiseSpec::Kind::Categorical: {
            std::vector<double> p(noise.probs.begin(), noise.probs.end());
            return {{"kind", "categorical"}, {"probs", p}};
        }
    }
    return {};
}

NoiseSpec noise_from_json(const json& j) {
    NoiseSpec noise;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gaussian") {
        noise.kind = NoiseSpec::Kind::Gaussian;
        noise.sigma = j.at("sigma").get<double>();
    } else if (kind == "uniform") {
        noise.kind = NoiseSpec::Kind::Uniform;
        noise.lo = j.at("lo").get<double>();
        noise.hi = j.at("hi").get<double>();
    } else if (kind == "categorical") {
        noise.kind = NoiseSpec::Kind::Categorical;
        auto p = j.at("probs").get<std::vector<double>>();
        noise.probs = Eigen::Map<Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
    } else {
        throw std::invalid_argument("graph json: unknown noise kind '" + kind + "'");
    }
    return noise;
}

}  // namespace

std::string graph_to_json(const CausalGraph& graph) {
    json j;
    j["name"] = graph.name;
    j["factors"] = graph.factor_names;
    json nodes = json::array();
    for (const GraphNode& node : graph.nodes) {
        json nj;
        nj["name"] = node.name;
        nj["parents"] = node.parents;
        nj["observed"] = node.observed;
        switch (node.fn.kind) {
            case StructuralFunction::Kind::Linear:
                nj["kind"] = "linear";
                break;
            case StructuralFunction::Kind::LinearTanh:
                nj["kind"] = "linear_tanh";
                break;
            case StructuralFunction::Kind::CategoricalTable:
                nj["kind"] = "categorical_table";
                break;
        }
        if (node.fn.kind == StructuralFunction::Kind::CategoricalTable) {
            std::vector<std::vector<double>> table;
            for (Eigen::Index r = 0; r < node.fn.table.rows(); ++r) {
                table.emplace_back(node.fn.table.row(r).begin(), node.fn.table.row(r).end());
            }
            nj["table"] = table;
        } else {
            nj["intercept"] = node.fn.intercept;
            nj["weights"] = std::vector<double>(node.fn.weights.begin(), node.fn.weights.end());
        }
        nj["noise"] = noise_to_json(node.noise);
        nodes.push_back(nj);
    }
    j["nodes"] = nodes;
    if (graph.observation) {
        j["observation"] = {{"hidden", graph.observation->hidden},
                            {"dim", graph.observation->dim},
                            {"coeff_seed", graph.observation->coeff_seed},
                            {"noise_sigma", graph.observation->noise_sigma}};
    }
    return j.dump(2);
}

CausalGraph graph_from_json(const std::string& text) {
    json j = json::parse(text);
    CausalGraph graph;
    graph.name = j.at("name").get<std::string>();
    graph.factor_names = j.at("factors").get<std::vector<std::string>>();
    for (const json& nj : j.at("nodes")) {
        GraphNode node;
        node.name = nj.at("name").get<std::string>();
        node.parents = nj.at("parents").get<std::vector<std::string>>();
        node.observed = nj.at("observed").get<bool>();
        const std::string kind = nj.at("kind").get<std::string>();
        if (kind == "linear") {
            node.fn.kind = StructuralFunction::Kind::Linear;
        } else if (kind == "linear_tanh") {
            node.fn.kind = StructuralFunction::Kind::LinearTanh;
        } else if (kind == "categorical_table") {
            node.fn.kind = StructuralFunction::Kind::CategoricalTable;
        } else {
            throw std::invalid_argument("graph json: unknown structural kind '" + kind + "'");
        }
        if (node.fn.kind == StructuralFunction::Kind::CategoricalTable) {
            auto rows = nj.at("table").get<std::vector<std::vector<double>>>();
            if (!rows.empty()) {
                node.fn.table.resize(static_cast<Eigen::Index>(rows.size()),
                                     static_cast<Eigen::Index>(rows[0].size()));
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    for (std::size_t c = 0; c < rows[r].size(); ++c) {
                        node.fn.table(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                            rows[r][c];
                    }
                }
            }
        } else {
            node.fn.intercept = nj.at("intercept").get<double>();
            auto w = nj.at("weights").get<std::vector<double>>();
            node.fn.weights = Eigen::Map<Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
        }
        node.noise = noise_from_json(nj.at("noise"));
        graph.nodes.push_back(std::move(node));
    }
    if (j.contains("observation")) {
        ObservationSpec obs;
        obs.hidden = j["observation"].at("hidden").get<int>();
        obs.dim = j["observation"].at("dim").get<int>();
        obs.coeff_seed = j["observation"].at("coeff_seed").get<std::uint64_t>();
        obs.noise_sigma = j["observation"].at("noise_sigma").get<double>();
        graph.observation = obs;
    }
    graph.validate();
    return graph;
}

}  // namespace credo::scm
