#pragma once

#include <functional>
#include <string>
#include <vector>

#include "credo/autodiff.hpp"
#include "credo/models.hpp"

namespace credo::effects {

using ad::Matrix;
using ad::Vector;

/// A differentiable scalar-per-row model: maps a B x D input node to a B x 1
/// output node on the same graph. MLP checkpoints and hand-built polynomial
/// graphs both fit this signature.
using DiffModel = std::function<ad::Tensor(ad::Graph&, const ad::Tensor&)>;

DiffModel mlp_model(const nn::MlpSpec& spec, Vector params);

/// Mean over rows of model(x) with column i clamped to alpha. Inputs are
/// treated as exogenous, so the clamp realizes do(x_i = alpha).
double interventional_expectation(const DiffModel& model, const Matrix& data, int feature,
                                  double alpha);

/// interventional_expectation(alpha) - interventional_expectation(alpha0),
/// computed on the same rows.
double acde(const DiffModel& model, const Matrix& data, int feature, double alpha, double alpha0);

/// E over rows of the order-th derivative of the model output w.r.t. feature
/// i at x_i = alpha, via backward applied `order` times. order in {1, 2}.
double expected_gradient(const DiffModel& model, const Matrix& data, int feature, double alpha,
                         int order = 1);

/// Dataset mean of the feature; the default ACDE baseline.
double default_baseline(const Matrix& data, int feature);

struct IdentityReport {
    int feature = 0;
    int order = 1;
    double baseline = 0.0;
    Vector grid;
    Vector acde_curve;          // one per grid point
    Vector expected_gradients;  // one per grid point
    Vector fd_curve;            // interior points only
    double max_deviation = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Compares central finite differences of the ACDE curve against the expected
/// gradient at interior grid points. The grid must be uniform with >= 5 points.
IdentityReport verify_acde_identity(const DiffModel& model, const Matrix& data, int feature,
                                    const Vector& grid, int order = 1);

std::string identity_report_to_json(const IdentityReport& report);

/// Known structural relations among input features, used for total effects:
/// x_feature = intercept + sum over terms of c1*p + c2*p^2 + c3*p^3.
struct InputStructure {
    struct Term {
        int parent = 0;
        double c1 = 0.0, c2 = 0.0, c3 = 0.0;
    };
    struct Relation {
        int feature = 0;
        double intercept = 0.0;
        std::vector<Term> terms;
    };
    std::vector<Relation> relations;

    bool empty() const { return relations.empty(); }
    void validate(int width) const;  // distinct features, acyclic
    /// Relations ordered so parents come first.
    std::vector<int> topo_order(int width) const;
    /// Features downstream of `feature` through the relations.
    std::vector<char> downstream_of(int feature, int width) const;
    /// Per-row total derivatives d x_j / d x_feature evaluated at `rows`.
    Matrix chain_derivatives(const Matrix& rows, int feature) const;
};

InputStructure structure_from_json(const std::string& text);
std::string structure_to_json(const InputStructure& structure);

/// Mean over rows of the total derivative dF/dx_i, with x_i clamped to alpha
/// and structure descendants recomputed from their relations. With an empty
/// structure this equals expected_gradient(order=1) exactly.
double total_gradient(const DiffModel& model, const Matrix& data, const InputStructure& structure,
                      int feature, double alpha);

}  // namespace credo::effects
