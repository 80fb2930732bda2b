#include "credo/regularizer.hpp"

#include <json.hpp>

#include <cmath>
#include <set>
#include <stdexcept>

namespace credo::reg {

using nlohmann::json;

double prior_value(const CausalPrior& prior, double x) {
    return prior.coeffs[0] + x * (prior.coeffs[1] + x * (prior.coeffs[2] + x * prior.coeffs[3]));
}

double prior_gradient(const CausalPrior& prior, double x) {
    return prior.coeffs[1] + 2.0 * prior.coeffs[2] * x + 3.0 * prior.coeffs[3] * x * x;
}

void CredoConfig::validate(int input_width) const {
    std::set<std::pair<int, int>> seen;
    for (const CausalPrior& prior : priors) {
        if (prior.feature < 0 || prior.feature >= input_width) {
            throw std::invalid_argument("credo: prior feature " + std::to_string(prior.feature) +
                                        " out of range for width " + std::to_string(input_width));
        }
        if (prior.lambda < 0.0) throw std::invalid_argument("credo: lambda must be >= 0");
        for (double c : prior.coeffs) {
            if (!std::isfinite(c)) throw std::invalid_argument("credo: non-finite coefficient");
        }
        if (!seen.insert({prior.feature, static_cast<int>(prior.kind)}).second) {
            throw std::invalid_argument("credo: duplicate prior for feature " +
                                        std::to_string(prior.feature));
        }
        if (prior.kind == EffectKind::NaturalTotal && !structure) {
            throw std::invalid_argument(
                "credo: natural-total prior requires an input structure");
        }
    }
    if (structure) structure->validate(input_width);
    if (order != 1) {
        throw std::invalid_argument("credo: penalty order must be 1");
    }
}

bool CredoConfig::active() const {
    for (const CausalPrior& prior : priors) {
        if (prior.lambda > 0.0) return true;
    }
    return false;
}

ad::Tensor credo_penalty_node(ad::Graph& graph, const ad::Tensor& x, const ad::Tensor& out,
                              const CredoConfig& config) {
    config.validate(static_cast<int>(x.cols()));
    if (!config.active()) return ad::Tensor();
    if (out.cols() != 1) {
        throw std::invalid_argument("credo: penalty requires a scalar-output network");
    }

    // Rows are independent through the network, so the gradient of the summed
    // output w.r.t. the batch holds each row's own input gradient.
    ad::Tensor grad_x = graph.backward(ad::sum(out), {x})[0];
    // copy: emitting penalty nodes below may reallocate the graph's storage
    const Matrix batch = x.value();
    const int width = static_cast<int>(batch.cols());

    ad::Tensor penalty;
    bool first = true;
    for (const CausalPrior& prior : config.priors) {
        if (prior.lambda <= 0.0) continue;

        ad::Tensor model_grad = ad::slice_cols(grad_x, prior.feature, 1);
        if (prior.kind == EffectKind::NaturalTotal && !config.structure->empty()) {
            const Matrix chain = config.structure->chain_derivatives(batch, prior.feature);
            for (int f = 0; f < width; ++f) {
                if (f == prior.feature) continue;
                if (chain.col(f).isZero(0.0)) continue;
                model_grad = ad::add(
                    model_grad, ad::mul(ad::slice_cols(grad_x, f, 1), graph.constant(chain.col(f))));
            }
        }

        Matrix target(batch.rows(), 1);
        for (Eigen::Index r = 0; r < batch.rows(); ++r) {
            target(r, 0) = prior_gradient(prior, batch(r, prior.feature));
        }
        ad::Tensor term = ad::scale(
            ad::mean(ad::square(ad::sub(model_grad, graph.constant(std::move(target))))),
            prior.lambda);
        penalty = first ? term : ad::add(penalty, term);
        first = false;
    }
    return penalty;
}

double credo_penalty(const nn::MlpSpec& spec, const Vector& params, const Matrix& batch,
                     const CredoConfig& config) {
    if (batch.rows() < 1) throw std::invalid_argument("credo: batch must be non-empty");
    config.validate(static_cast<int>(batch.cols()));
    if (!config.active()) return 0.0;
    ad::Graph graph;
    std::vector<ad::Tensor> pnodes = nn::param_inputs(graph, spec, params);
    ad::Tensor x = graph.input(batch);
    ad::Tensor out = nn::mlp_forward(graph, spec, pnodes, x);
    return credo_penalty_node(graph, x, out, config).scalar();
}

nn::TrainResult train_with_credo(const nn::MlpSpec& spec, const Matrix& x, const Matrix& y,
                                 const CredoConfig& config, const nn::TrainOptions& opts) {
    config.validate(spec.input_width());
    nn::PenaltyBuilder builder;
    if (config.active()) {
        builder = [config](ad::Graph& graph, const ad::Tensor& xnode, const ad::Tensor& out,
                           const std::vector<ad::Tensor>&) {
            return credo_penalty_node(graph, xnode, out, config);
        };
    }
    return nn::train_mlp_regression(spec, x, y, opts, builder);
}

CredoConfig config_from_json(const std::string& text) {
    json j = json::parse(text);
    CredoConfig config;
    const json& priors = j.is_array() ? j : j.at("priors");
    for (const json& pj : priors) {
        CausalPrior prior;
        prior.feature = pj.at("feature").get<int>();
        const std::string kind = pj.value("kind", "direct");
        if (kind == "direct") {
            prior.kind = EffectKind::ControlledDirect;
        } else if (kind == "total") {
            prior.kind = EffectKind::NaturalTotal;
        } else {
            throw std::invalid_argument("credo config: unknown effect kind '" + kind + "'");
        }
        auto coeffs = pj.at("coefficients").get<std::vector<double>>();
        if (coeffs.size() > 4) {
            throw std::invalid_argument("credo config: prior polynomials have degree <= 3");
        }
        for (std::size_t k = 0; k < coeffs.size(); ++k) prior.coeffs[k] = coeffs[k];
        prior.lambda = pj.at("lambda").get<double>();
        config.priors.push_back(prior);
    }
    if (!j.is_array() && j.contains("structure")) {
        config.structure = effects::structure_from_json(j["structure"].dump());
    }
    return config;
}

std::string config_to_json(const CredoConfig& config) {
    json priors = json::array();
    for (const CausalPrior& prior : config.priors) {
        priors.push_back(
            {{"feature", prior.feature},
             {"kind", prior.kind == EffectKind::ControlledDirect ? "direct" : "total"},
             {"coefficients", std::vector<double>(prior.coeffs.begin(), prior.coeffs.end())},
             {"lambda", prior.lambda}});
    }
    if (!config.structure) return priors.dump(2);
    json j;
    j["priors"] = priors;
    j["structure"] = json::parse(effects::structure_to_json(*config.structure));
    return j.dump(2);
}

}  // namespace credo::reg
