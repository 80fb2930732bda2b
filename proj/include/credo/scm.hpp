#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace credo::scm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct NoiseSpec {
    enum class Kind { Gaussian, Uniform, Categorical };
    Kind kind = Kind::Gaussian;
    double sigma = 1.0;    // gaussian
    double lo = -1.0;      // uniform
    double hi = 1.0;
    Vector probs;          // categorical; must sum to 1 within 1e-12
};

struct StructuralFunction {
    enum class Kind { Linear, LinearTanh, CategoricalTable };
    Kind kind = Kind::Linear;
    double intercept = 0.0;
    Vector weights;  // one per parent (linear kinds)
    Matrix table;    // row per parent code (categorical-table); rows sum to 1
};

struct GraphNode {
    std::string name;
    std::vector<std::string> parents;
    StructuralFunction fn;
    NoiseSpec noise;
    bool observed = true;
};

/// Fixed nonlinear map from generative factors to an observation vector:
/// x = W2 * tanh(W1 * g + b1) + b2 + sigma * eps, with coefficients drawn
/// deterministically from coeff_seed.
struct ObservationSpec {
    int hidden = 32;
    int dim = 16;
    std::uint64_t coeff_seed = 0;
    double noise_sigma = 0.0;

    Matrix w1, w2;
    Vector b1, b2;

    void materialize(int factor_count);
    /// Noiseless map R(g); differentiable in g.
    Vector apply(const Vector& factors) const;
};

/// DAG of structural equations. Node order is the topological order: every
/// parent appears before its children.
struct CausalGraph {
    std::string name;
    std::vector<GraphNode> nodes;
    std::vector<std::string> factor_names;
    std::optional<ObservationSpec> observation;

    void validate();  // also materializes the observation map

    int node_index(const std::string& node_name) const;  // -1 when absent
    int factor_index(const std::string& node_name) const;
    bool is_descendant(const std::string& ancestor, const std::string& node) const;
    std::vector<std::string> confounder_names() const;  // observed non-factor nodes
    /// Node count plus one for the observation block when present.
    int component_count() const;
};

CausalGraph candle_preset();
CausalGraph triangle_preset();
CausalGraph regression_preset();
const std::vector<std::string>& preset_names();
CausalGraph make_preset(const std::string& name);

struct Intervention {
    std::string node;
    double value = 0.0;
};

struct Dataset {
    Matrix factors;       // n x N
    Matrix confounders;   // n x M (observed confounders only)
    Matrix observations;  // n x D (empty when the graph has no observation map)
    std::vector<std::string> factor_names;
    std::vector<std::string> confounder_names;

    std::string graph_name;
    std::uint64_t seed = 0;
    long n = 0;
    std::string intervention;  // empty for observational data

    Eigen::Index factor_count() const { return factors.cols(); }
};

/// Ancestral sampling in topological order. Each (row, node) pair draws from
/// its own derived substream, so rows are independent of n and of each other
/// and interventions leave non-intervened noise draws untouched (common
/// random numbers).
Dataset sample_observational(const CausalGraph& graph, long n, std::uint64_t seed);

/// do-operator sampling: intervened nodes are clamped and their structural
/// equations and noise draws are discarded; descendants are sampled normally.
Dataset sample_interventional(const CausalGraph& graph, const std::vector<Intervention>& dos,
                              long n, std::uint64_t seed);

/// Paired counterfactual rows: re-runs every row of `base` with
/// do(factor = original value + delta), reusing the row's noise draws.
Dataset resample_shifted(const CausalGraph& graph, const Dataset& base, int factor, double delta);

struct EffectEstimate {
    double value = 0.0;
    bool warning = false;  // set when target is not downstream of node
};

/// E[target | do(node=alpha)] - E[target | do(node=alpha0)] by Monte Carlo
/// with common random numbers.
EffectEstimate ground_truth_effect(const CausalGraph& graph, const std::string& target,
                                   const std::string& node, double alpha, double alpha0, long n,
                                   std::uint64_t seed);

std::string graph_to_json(const CausalGraph& graph);
CausalGraph graph_from_json(const std::string& text);

}  // namespace credo::scm
