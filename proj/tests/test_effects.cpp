#include <doctest.h>

#include <cmath>

#include "credo/effects.hpp"
#include "credo/rng.hpp"
#include "oracles.hpp"

using namespace credo;
using effects::DiffModel;
using effects::InputStructure;
using effects::Matrix;
using effects::Vector;

namespace {

Matrix gaussian_data(Rng& rng, long rows, int cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (long r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    return m;
}

oracles::PolyModel linear_2_3() {
    // F = 2 x0 + 3 x1
    oracles::PolyModel poly;
    poly.monomials.push_back({2.0, {{0, 1}}});
    poly.monomials.push_back({3.0, {{1, 1}}});
    return poly;
}

oracles::PolyModel square_x0() {
    oracles::PolyModel poly;
    poly.monomials.push_back({1.0, {{0, 2}}});
    return poly;
}

Matrix centered_data(Rng& rng, long rows, int cols) {
    Matrix m = gaussian_data(rng, rows, cols);
    for (int c = 0; c < cols; ++c) m.col(c).array() -= m.col(c).mean();
    return m;
}

}  // namespace

TEST_CASE("interventional expectation closed forms") {
    Rng rng(1);
    Matrix data = centered_data(rng, 50, 2);
    DiffModel linear = oracles::poly_model(linear_2_3());

    CHECK(effects::interventional_expectation(linear, data, 0, 1.0) ==
          doctest::Approx(2.0).epsilon(1e-12));

    oracles::PolyModel constant;
    constant.monomials.push_back({4.5, {}});
    DiffModel cm = oracles::poly_model(constant);
    CHECK(effects::interventional_expectation(cm, data, 0, -3.0) == doctest::Approx(4.5));
    CHECK(effects::interventional_expectation(cm, data, 0, 7.0) == doctest::Approx(4.5));

    DiffModel sq = oracles::poly_model(square_x0());
    CHECK(effects::interventional_expectation(sq, data, 0, 3.0) == doctest::Approx(9.0));
}

TEST_CASE("acde closed forms and antisymmetry") {
    Rng rng(2);
    Matrix data = centered_data(rng, 40, 2);
    DiffModel linear = oracles::poly_model(linear_2_3());
    CHECK(effects::acde(linear, data, 0, 1.0, 0.0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(effects::acde(linear, data, 0, 0.7, 0.7) == 0.0);

    DiffModel sq = oracles::poly_model(square_x0());
    CHECK(effects::acde(sq, data, 0, 2.0, 0.0) == doctest::Approx(4.0));
    CHECK(effects::acde(sq, data, 0, 2.0, 0.5) == -effects::acde(sq, data, 0, 0.5, 2.0));
}

TEST_CASE("expected gradient closed forms") {
    Rng rng(3);
    Matrix data = gaussian_data(rng, 30, 2);
    DiffModel linear = oracles::poly_model(linear_2_3());
    for (double alpha : {-1.0, 0.0, 2.5}) {
        CHECK(effects::expected_gradient(linear, data, 0, alpha, 1) == doctest::Approx(2.0));
    }
    DiffModel sq = oracles::poly_model(square_x0());
    CHECK(effects::expected_gradient(sq, data, 0, 3.0, 1) == doctest::Approx(6.0));
    CHECK(effects::expected_gradient(sq, data, 0, 1.7, 2) == doctest::Approx(2.0));
    CHECK_THROWS_AS(effects::expected_gradient(sq, data, 0, 0.0, 3), std::invalid_argument);
}

TEST_CASE("models ignoring a feature have identically zero effects") {
    Rng rng(4);
    Matrix data = gaussian_data(rng, 25, 3);
    oracles::PolyModel poly;
    poly.monomials.push_back({1.5, {{1, 1}}});  // uses only x1
    DiffModel model = oracles::poly_model(poly);
    for (double alpha : {-2.0, 0.0, 1.0, 3.0}) {
        CHECK(effects::acde(model, data, 0, alpha, 0.0) == 0.0);
        CHECK(effects::expected_gradient(model, data, 0, alpha, 1) == 0.0);
    }
}

TEST_CASE("acde identity on the quadratic is exact") {
    Rng rng(5);
    Matrix data = centered_data(rng, 60, 3);
    DiffModel sq = oracles::poly_model(square_x0());
    Vector grid = Vector::LinSpaced(7, 0.0, 3.0);

    effects::IdentityReport r1 = effects::verify_acde_identity(sq, data, 0, grid, 1);
    CHECK(r1.max_deviation < 1e-6);
    CHECK(r1.pass);
    // analytic slope 2 alpha at interior points
    for (Eigen::Index k = 1; k + 1 < grid.size(); ++k) {
        CHECK(r1.expected_gradients(k) == doctest::Approx(2.0 * grid(k)));
    }

    effects::IdentityReport r2 = effects::verify_acde_identity(sq, data, 0, grid, 2);
    CHECK(r2.max_deviation < 1e-6);
    for (Eigen::Index k = 0; k < grid.size(); ++k) {
        CHECK(r2.expected_gradients(k) == doctest::Approx(2.0));
    }
}

TEST_CASE("acde identity on a linear model at order 2 vanishes") {
    Rng rng(6);
    Matrix data = centered_data(rng, 30, 2);
    DiffModel linear = oracles::poly_model(linear_2_3());
    Vector grid = Vector::LinSpaced(5, -1.0, 1.0);
    effects::IdentityReport r = effects::verify_acde_identity(linear, data, 0, grid, 2);
    CHECK(r.max_deviation < 1e-9);
    CHECK(r.expected_gradients.isZero(1e-12));
}

TEST_CASE("acde identity on a trained tanh mlp") {
    Rng rng(7);
    const long n = 200;
    Matrix x = gaussian_data(rng, n, 2);
    Matrix y(n, 1);
    for (long r = 0; r < n; ++r) y(r, 0) = std::sin(x(r, 0)) + 0.5 * x(r, 1);

    nn::MlpSpec spec;
    spec.widths = {2, 16, 1};
    spec.activations = {nn::Act::Tanh};
    nn::TrainOptions opts;
    opts.epochs = 80;
    opts.lr = 0.02;
    opts.seed = 11;
    auto trained = nn::train_mlp_regression(spec, x, y, opts);
    DiffModel model = effects::mlp_model(spec, trained.checkpoint.params);

    Vector grid = Vector::LinSpaced(41, -0.2, 0.2);  // step 1e-2
    effects::IdentityReport r = effects::verify_acde_identity(model, x, 0, grid, 1);
    CHECK(r.max_deviation < 1e-4);
    CHECK(r.pass);
}

TEST_CASE("identity verification rejects bad grids") {
    Rng rng(8);
    Matrix data = gaussian_data(rng, 10, 1);
    DiffModel sq = oracles::poly_model(square_x0());
    Vector tiny = Vector::LinSpaced(3, 0.0, 1.0);
    CHECK_THROWS_AS(effects::verify_acde_identity(sq, data, 0, tiny, 1), std::invalid_argument);
    Vector uneven(5);
    uneven << 0.0, 0.1, 0.2, 0.35, 0.4;
    CHECK_THROWS_AS(effects::verify_acde_identity(sq, data, 0, uneven, 1), std::invalid_argument);
}

TEST_CASE("total gradient follows input structure") {
    Rng rng(9);

    SUBCASE("F = x0 + x1 with x1 = 2 x0 gives 3") {
        Matrix data(20, 2);
        for (long r = 0; r < 20; ++r) {
            data(r, 0) = rng.normal();
            data(r, 1) = 2.0 * data(r, 0);
        }
        oracles::PolyModel poly;
        poly.monomials.push_back({1.0, {{0, 1}}});
        poly.monomials.push_back({1.0, {{1, 1}}});
        InputStructure structure;
        structure.relations.push_back({1, 0.0, {{0, 2.0, 0.0, 0.0}}});
        CHECK(effects::total_gradient(oracles::poly_model(poly), data, structure, 0, 0.5) ==
              doctest::Approx(3.0));
    }
    SUBCASE("empty structure reduces to the partial gradient exactly") {
        Matrix data = gaussian_data(rng, 15, 3);
        DiffModel linear = oracles::poly_model(linear_2_3());
        const double total = effects::total_gradient(linear, data, InputStructure{}, 0, 0.3);
        const double partial = effects::expected_gradient(linear, data, 0, 0.3, 1);
        CHECK(total == partial);
    }
    SUBCASE("chain rule through x1 = x0^2") {
        Matrix data(10, 2);
        for (long r = 0; r < 10; ++r) {
            data(r, 0) = rng.normal();
            data(r, 1) = data(r, 0) * data(r, 0);
        }
        oracles::PolyModel poly;
        poly.monomials.push_back({1.0, {{1, 1}}});  // F = x1
        InputStructure structure;
        structure.relations.push_back({1, 0.0, {{0, 0.0, 1.0, 0.0}}});
        CHECK(effects::total_gradient(oracles::poly_model(poly), data, structure, 0, 2.0) ==
              doctest::Approx(4.0));
    }
    SUBCASE("cycles are rejected") {
        InputStructure structure;
        structure.relations.push_back({0, 0.0, {{1, 1.0, 0.0, 0.0}}});
        structure.relations.push_back({1, 0.0, {{0, 1.0, 0.0, 0.0}}});
        CHECK_THROWS_AS(structure.validate(2), std::invalid_argument);
    }
}

TEST_CASE("implementation agrees with the polynomial oracle on random fixtures") {
    Rng rng(10);
    int checked = 0;
    for (int fixture = 0; fixture < 100; ++fixture) {
        const int width = 2 + static_cast<int>(rng.below(3));
        Matrix data = gaussian_data(rng, 30, width);
        oracles::PolyModel poly;
        const int terms = 1 + static_cast<int>(rng.below(3));
        for (int t = 0; t < terms; ++t) {
            oracles::PolyModel::Monomial mono;
            mono.coeff = rng.uniform(-2.0, 2.0);
            const int factors = 1 + static_cast<int>(rng.below(2));
            for (int f = 0; f < factors; ++f) {
                mono.powers.push_back({static_cast<int>(rng.below(width)),
                                       1 + static_cast<int>(rng.below(3))});
            }
            poly.monomials.push_back(mono);
        }
        const int feature = static_cast<int>(rng.below(width));
        const double alpha = rng.uniform(-1.5, 1.5);
        const double alpha0 = rng.uniform(-1.5, 1.5);
        const int order = 1 + static_cast<int>(rng.below(2));

        auto oracle = oracles::polynomial_effect_oracle(poly, data, feature, alpha, alpha0, order);
        DiffModel model = oracles::poly_model(poly);
        const double impl_acde = effects::acde(model, data, feature, alpha, alpha0);
        const double impl_grad = effects::expected_gradient(model, data, feature, alpha, order);
        CHECK(impl_acde == doctest::Approx(oracle.acde).epsilon(1e-9));
        CHECK(impl_grad == doctest::Approx(oracle.derivative).epsilon(1e-9));
        ++checked;
    }
    CHECK(checked == 100);
}
