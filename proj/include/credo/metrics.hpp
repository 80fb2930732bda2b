#pragma once

#include <functional>
#include <string>
#include <vector>

#include "credo/models.hpp"
#include "credo/scm.hpp"

namespace credo::metrics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One dataset row. Fixture encoders may read the ground-truth factors;
/// trained encoders only look at the observation.
struct Sample {
    Vector factors;
    Vector confounders;
    Vector observation;
};

Sample sample_at(const scm::Dataset& dataset, long row);

using Encoder = std::function<Vector(const Sample&)>;
using Decoder = std::function<Vector(const Vector& latent)>;
/// Per-factor class probabilities for an observation: factors x classes,
/// rows summing to 1.
using Classifier = std::function<Matrix(const Vector& observation)>;

Encoder vae_encoder(const nn::VaeSpec& spec, const Vector& params);
Decoder vae_decoder(const nn::VaeSpec& spec, const Vector& params);
Classifier checkpoint_classifier(const nn::MlpSpec& spec, const Vector& params);

/// Binary factor class by sign; matches how classifier fixtures are labeled.
int factor_class(double factor_value);
int factor_class_count();

/// Latent dimensions whose displacement between a sample and its factor-i
/// counterfactual pair exceeds tau standard deviations.
std::vector<int> attribute_latents(const Vector& z, const Vector& z_pair, const Vector& latent_std,
                                   double tau);

/// sets[sample][factor] = sorted latent dimensions attributed to the factor.
using FactorSets = std::vector<std::vector<std::vector<int>>>;

struct Attribution {
    FactorSets sets;
    Vector latent_std;
    Matrix latents;  // one encoded row per sample
};

/// Full attribution pipeline: encodes the dataset, regenerates a paired
/// dataset per factor with do(factor = value + delta) under the row's own
/// noise, and thresholds the normalized latent displacement at tau.
Attribution attribute_all(const Encoder& encoder, const scm::CausalGraph& graph,
                          const scm::Dataset& dataset, double tau, double delta = 1.0);

/// 1 - mean over samples of the mean pairwise Jaccard overlap of the
/// per-factor sets; the Jaccard of two empty sets counts as 0.
double unconfoundedness(const FactorSets& sets, int factor_count);

/// Encode (z = mu), overwrite the listed dimensions, decode.
Vector generate_counterfactual(const Encoder& encoder, const Decoder& decoder,
                               const Sample& sample, const std::vector<int>& dims,
                               const Vector& values);

/// |p_{factor,cls}(x) - p_{factor,cls}(x_cf)|, in [0,1].
double ace_on_factor(const Classifier& classifier, const Vector& x, const Vector& x_cf, int factor,
                     int cls);

struct CgPerFactor {
    int factor = 0;
    double ace_target = 0.0;
    double ace_complement = 0.0;
};

struct CgReport {
    double cg = 0.0;
    std::vector<CgPerFactor> per_factor;
};

/// Counterfactual generativeness: per factor, the gap between the prediction
/// effect of intervening on its attributed latents versus the complement set.
/// Interventional values come from a donor sample whose factor class differs.
CgReport counterfactual_generativeness(const Encoder& encoder, const Decoder& decoder,
                                       const Classifier& classifier, const scm::Dataset& dataset,
                                       const Attribution& attribution);

}  // namespace credo::metrics
