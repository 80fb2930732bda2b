#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "credo/effects.hpp"
#include "credo/models.hpp"

namespace credo::reg {

using ad::Matrix;
using ad::Vector;

enum class EffectKind { ControlledDirect, NaturalTotal };

/// Domain knowledge enforced at training time: the model's causal effect of
/// feature i should follow the polynomial prior g, weighted by lambda.
struct CausalPrior {
    int feature = 0;
    EffectKind kind = EffectKind::ControlledDirect;
    std::array<double, 4> coeffs{0.0, 0.0, 0.0, 0.0};  // g(x) = c0 + c1 x + c2 x^2 + c3 x^3
    double lambda = 0.0;
};

double prior_value(const CausalPrior& prior, double x);
/// Analytic derivative g'(x) of the polynomial prior.
double prior_gradient(const CausalPrior& prior, double x);

struct CredoConfig {
    std::vector<CausalPrior> priors;
    std::optional<effects::InputStructure> structure;  // required for natural-total priors
    int order = 1;

    void validate(int input_width) const;
    /// True when at least one prior has positive weight.
    bool active() const;
};

/// Builds the penalty as graph nodes: sum over priors of lambda times the
/// batch mean of (D_i F(x) - g'(x_i))^2, where D_i F is the per-row partial
/// (controlled-direct) or total (natural-total) gradient of the network
/// output. The gradient itself is a graph node, so the penalty can be
/// differentiated with respect to the parameters (double backpropagation).
/// Returns an invalid tensor when no prior is active.
ad::Tensor credo_penalty_node(ad::Graph& graph, const ad::Tensor& x, const ad::Tensor& out,
                              const CredoConfig& config);

/// Standalone penalty evaluation for a frozen model on a batch.
double credo_penalty(const nn::MlpSpec& spec, const Vector& params, const Matrix& batch,
                     const CredoConfig& config);

/// Minimizes ERM + penalty. With no active prior this is exactly plain
/// training: identical seeds give identical checkpoints.
nn::TrainResult train_with_credo(const nn::MlpSpec& spec, const Matrix& x, const Matrix& y,
                                 const CredoConfig& config, const nn::TrainOptions& opts);

CredoConfig config_from_json(const std::string& text);
std::string config_to_json(const CredoConfig& config);

}  // namespace credo::reg
