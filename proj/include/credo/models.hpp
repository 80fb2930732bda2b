#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "credo/autodiff.hpp"

namespace credo::nn {

using ad::Matrix;
using ad::Vector;

enum class Act { Relu, Tanh, Identity };
enum class Head { Regression, Softmax };

struct MlpSpec {
    std::vector<int> widths;       // input, hidden..., output
    std::vector<Act> activations;  // one per hidden layer
    Head head = Head::Regression;
    int softmax_blocks = 1;  // softmax applied per block of output columns

    void validate() const;
    int layer_count() const { return static_cast<int>(widths.size()) - 1; }
    int input_width() const { return widths.front(); }
    int output_width() const { return widths.back(); }
    long param_count() const;
};

struct VaeSpec {
    MlpSpec encoder;  // D -> 2*latent (mu, logvar)
    int latent = 0;
    MlpSpec decoder;  // latent -> D
    double beta = 1.0;

    void validate() const;
    long param_count() const { return encoder.param_count() + decoder.param_count(); }
};

/// Deterministic init: weights ~ N(0,1)/sqrt(fan_in), biases zero.
Vector init_params(const MlpSpec& spec, std::uint64_t seed);
Vector init_params(const VaeSpec& spec, std::uint64_t seed);

/// Per-layer parameter tensors (W then b for each layer) created as graph
/// inputs, so the training loss can be differentiated with respect to them.
std::vector<ad::Tensor> param_inputs(ad::Graph& graph, const MlpSpec& spec, const Vector& flat,
                                     long offset = 0);
Vector flatten_grads(const std::vector<ad::Tensor>& grads);

ad::Tensor mlp_forward(ad::Graph& graph, const MlpSpec& spec,
                       const std::vector<ad::Tensor>& params, const ad::Tensor& x);

/// Plain (graph-free) forward pass; same arithmetic as mlp_forward.
Matrix mlp_eval(const MlpSpec& spec, const Vector& flat, const Matrix& x);

struct VaeForward {
    Matrix mu, logvar, z, recon;
};

/// eps == nullptr draws reparameterization noise from `seed`; pass a zero
/// matrix to get z = mu.
VaeForward vae_eval(const VaeSpec& spec, const Vector& flat, const Matrix& x, std::uint64_t seed,
                    const Matrix* eps = nullptr);

/// Encoder mean only (the deterministic embedding used by the metrics).
Matrix vae_encode_mu(const VaeSpec& spec, const Vector& flat, const Matrix& x);
Matrix vae_decode(const VaeSpec& spec, const Vector& flat, const Matrix& z);

/// KL(N(mu, sigma^2) || N(0,1)) summed over dimensions, averaged over the batch.
double kl_term(const Matrix& mu, const Matrix& logvar);

/// Mean-over-batch squared reconstruction error (summed over dimensions) plus
/// beta times the KL term.
double elbo_loss(const Matrix& mu, const Matrix& logvar, const Matrix& recon,
                 const Matrix& target, double beta);

struct TrainOptions {
    double lr = 0.01;
    int epochs = 100;
    int batch = 64;
    std::uint64_t seed = 0;
};

struct EpochStats {
    double loss = 0.0;     // erm + penalty
    double erm = 0.0;
    double penalty = 0.0;
};

struct CheckpointMeta {
    std::uint64_t seed = 0;
    int epochs = 0;
    double final_loss = 0.0;
    double final_penalty = 0.0;
};

struct Checkpoint {
    std::string kind;  // "mlp", "classifier" or "vae"
    MlpSpec mlp;
    std::optional<VaeSpec> vae;
    Vector params;
    CheckpointMeta meta;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochStats> history;
};

class TrainingDiverged : public std::runtime_error {
  public:
    TrainingDiverged(int epoch_index, const std::string& what)
        : std::runtime_error(what), epoch(epoch_index) {}
    int epoch;
};

/// Optional training-time regularizer: builds a scalar penalty node from the
/// batch input node, the network output node and the parameter nodes.
using PenaltyBuilder = std::function<ad::Tensor(ad::Graph&, const ad::Tensor& x,
                                                const ad::Tensor& out,
                                                const std::vector<ad::Tensor>& params)>;

TrainResult train_mlp_regression(const MlpSpec& spec, const Matrix& x, const Matrix& y,
                                 const TrainOptions& opts,
                                 const PenaltyBuilder& penalty = nullptr);

/// labels holds one class index per (row, block).
TrainResult train_classifier(const MlpSpec& spec, const Matrix& x, const Matrix& labels,
                             const TrainOptions& opts);

TrainResult train_vae(const VaeSpec& spec, const Matrix& x, const TrainOptions& opts);

/// Mean per-block accuracy of a softmax-head classifier.
double classifier_accuracy(const MlpSpec& spec, const Vector& params, const Matrix& x,
                           const Matrix& labels);

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

const char* act_name(Act a);
Act act_from_name(const std::string& name);

}  // namespace credo::nn
