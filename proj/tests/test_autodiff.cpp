#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "credo/autodiff.hpp"
#include "credo/rng.hpp"

using namespace credo;
using ad::Graph;
using ad::Matrix;
using ad::Tensor;
using ad::Vector;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

// Checks backward() against central differences for a scalar-valued builder.
// The input enters as a graph leaf so finite differences can reuse the graph
// via set_value + recompute.
void check_gradient(const std::function<Tensor(Graph&, Tensor)>& build, const Matrix& x0,
                    double tol = 1e-5) {
    Graph g;
    Tensor x = g.input(x0);
    Tensor out = build(g, x);
    REQUIRE(out.value().size() == 1);
    Tensor grad = g.backward(out, {x})[0];

    auto f = [&](const Vector& flat) {
        Matrix m = x0;
        for (Eigen::Index i = 0; i < flat.size(); ++i) m(i / x0.cols(), i % x0.cols()) = flat(i);
        g.set_value(x, m);
        g.recompute();
        return out.value()(0, 0);
    };
    Vector flat(x0.size());
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = x0(i / x0.cols(), i % x0.cols());
    Vector fd = ad::finite_difference_gradient(f, flat, 1e-4);
    g.set_value(x, x0);
    g.recompute();

    for (Eigen::Index i = 0; i < flat.size(); ++i) {
        const double a = grad.value()(i / x0.cols(), i % x0.cols());
        const double b = fd(i);
        const double rel = std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
        CAPTURE(i);
        CHECK(rel < tol);
    }
}

}  // namespace

TEST_CASE("forward values match hand results") {
    Graph g;
    Matrix a(2, 2);
    a << 1, 2, 3, 4;
    Matrix b(2, 1);
    b << 1, 1;
    Tensor prod = ad::matmul(g.constant(a), g.constant(b));
    CHECK(prod.value()(0, 0) == doctest::Approx(3.0));
    CHECK(prod.value()(1, 0) == doctest::Approx(7.0));

    CHECK(ad::sigmoid(g.constant(0.0)).scalar() == doctest::Approx(0.5));

    Matrix v(1, 3);
    v << 2, 4, 6;
    CHECK(ad::mean(g.constant(v)).scalar() == doctest::Approx(4.0));
}

TEST_CASE("shape mismatches are rejected with shapes named") {
    Graph g;
    Tensor a = g.constant(Matrix::Zero(2, 3));
    Tensor b = g.constant(Matrix::Zero(2, 4));
    CHECK_THROWS_WITH_AS(ad::add(a, b), "add: shape mismatch (2x3 vs 2x4)", std::invalid_argument);
    CHECK_THROWS_AS(ad::matmul(a, a), std::invalid_argument);
}

TEST_CASE("backward on simple scalar functions") {
    SUBCASE("sigmoid' at 0 is 0.25") {
        Graph g;
        Tensor x = g.input(Matrix::Zero(1, 1));
        Tensor y = ad::sigmoid(x);
        CHECK(g.backward(y, {x})[0].scalar() == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("linear function has constant gradient") {
        Graph g;
        Tensor x = g.input(Matrix::Constant(1, 1, 1.7));
        Tensor y = g.input(Matrix::Constant(1, 1, -0.3));
        Tensor out = ad::add(ad::scale(x, 2.0), ad::scale(y, 3.0));
        auto grads = g.backward(out, {x, y});
        CHECK(grads[0].scalar() == doctest::Approx(2.0));
        CHECK(grads[1].scalar() == doctest::Approx(3.0));
    }
    SUBCASE("second derivative of x^3 at 2 is 12") {
        Graph g;
        Tensor x = g.input(Matrix::Constant(1, 1, 2.0));
        Tensor y = ad::mul(ad::square(x), x);
        Tensor dy = g.backward(y, {x})[0];
        Tensor d2y = g.backward(dy, {x})[0];
        CHECK(d2y.scalar() == doctest::Approx(12.0).epsilon(1e-12));
    }
}

TEST_CASE("backward argument validation") {
    Graph g;
    Tensor x = g.input(Matrix::Zero(2, 2));
    Tensor y = ad::square(x);
    CHECK_THROWS_AS(g.backward(y, {x}), std::invalid_argument);  // non-scalar output

    Graph other;
    Tensor foreign = other.input(Matrix::Zero(1, 1));
    Tensor s = ad::sum(y);
    CHECK_THROWS_AS(g.backward(s, {foreign}), std::invalid_argument);
}

TEST_CASE("finite differences recover known derivatives") {
    auto sq = [](const Vector& v) { return v(0) * v(0); };
    Vector x0(1);
    x0 << 3.0;
    CHECK(ad::finite_difference_gradient(sq, x0, 1e-4)(0) == doctest::Approx(6.0).epsilon(1e-6));

    auto th = [](const Vector& v) { return std::tanh(v(0)); };
    x0 << 0.0;
    CHECK(ad::finite_difference_gradient(th, x0, 1e-4)(0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("per-op gradients match finite differences") {
    Rng rng(20240811);
    for (int trial = 0; trial < 8; ++trial) {
        Matrix x0 = random_matrix(rng, 3, 4);
        Matrix w = random_matrix(rng, 4, 2);
        Matrix proj = random_matrix(rng, 3, 2);
        Matrix elt = random_matrix(rng, 3, 4);

        check_gradient([&](Graph&, Tensor x) { return ad::sum(ad::tanh(x)); }, x0);
        check_gradient([&](Graph&, Tensor x) { return ad::mean(ad::sigmoid(x)); }, x0);
        check_gradient([&](Graph&, Tensor x) { return ad::sum(ad::exp(ad::scale(x, 0.3))); }, x0);
        check_gradient(
            [&](Graph&, Tensor x) { return ad::sum(ad::log(ad::exp(x))); }, x0);
        check_gradient([&](Graph&, Tensor x) { return ad::sum(ad::square(x)); }, x0);
        check_gradient(
            [&](Graph& g, Tensor x) {
                return ad::sum(ad::mul(ad::matmul(x, g.constant(w)), g.constant(proj)));
            },
            x0);
        check_gradient(
            [&](Graph& g, Tensor x) { return ad::sum(ad::mul(x, g.constant(elt))); }, x0);
        check_gradient(
            [&](Graph&, Tensor x) {
                return ad::sum(ad::slice_cols(ad::concat(x, ad::square(x)), 2, 4));
            },
            x0);
        check_gradient(
            [&](Graph&, Tensor x) { return ad::sum(ad::square(ad::sum_rows(x))); }, x0);
        check_gradient(
            [&](Graph&, Tensor x) { return ad::sum(ad::square(ad::sum_cols(x))); }, x0);
        check_gradient(
            [&](Graph&, Tensor x) { return ad::sum(ad::square(ad::transpose(x))); }, x0);
        check_gradient(
            [&](Graph&, Tensor x) { return ad::mean(ad::square(ad::clamp_feature(x, 1, 0.5))); },
            x0);
        check_gradient(
            [&](Graph&, Tensor x) { return ad::sum(ad::square(ad::softmax_rows(x))); }, x0);
        // relu probed away from the kink
        check_gradient(
            [&](Graph& g, Tensor x) {
                return ad::sum(ad::relu(ad::add(x, g.constant(Matrix::Constant(3, 4, 2.0)))));
            },
            x0);
    }
}

TEST_CASE("hand-built MLP gradients match finite differences across seeds") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(derive_seed(99, seed));
        const int d = 3, h = 5, batch = 4;
        Matrix x0 = random_matrix(rng, batch, d);
        Matrix w1 = random_matrix(rng, d, h, 1.0 / std::sqrt(double(d)));
        Matrix b1 = random_matrix(rng, 1, h, 0.1);
        Matrix w2 = random_matrix(rng, h, 1, 1.0 / std::sqrt(double(h)));
        Matrix b2 = random_matrix(rng, 1, 1, 0.1);

        check_gradient(
            [&](Graph& g, Tensor x) {
                Tensor hidden = ad::tanh(ad::affine(x, g.constant(w1), g.constant(b1)));
                Tensor out = ad::affine(hidden, g.constant(w2), g.constant(b2));
                return ad::mean(out);
            },
            x0);
    }
}

TEST_CASE("double backward equals analytic second derivatives on polynomials") {
    // p(x) = 2x^3 - x^2 + 5x - 1; p''(x) = 12x - 2
    for (double at : {-1.5, -0.2, 0.0, 0.7, 2.0}) {
        Graph g;
        Tensor x = g.input(Matrix::Constant(1, 1, at));
        Tensor p = ad::add(
            ad::sub(ad::scale(ad::mul(ad::square(x), x), 2.0), ad::square(x)),
            ad::sub(ad::scale(x, 5.0), g.constant(1.0)));
        Tensor d1 = g.backward(p, {x})[0];
        Tensor d2 = g.backward(d1, {x})[0];
        CHECK(std::abs(d1.scalar() - (6.0 * at * at - 2.0 * at + 5.0)) < 1e-9);
        CHECK(std::abs(d2.scalar() - (12.0 * at - 2.0)) < 1e-9);
    }
}

TEST_CASE("double backward through transcendental ops") {
    struct Case {
        std::function<Tensor(Tensor)> f;
        std::function<double(double)> second;
    };
    const double at = 0.4;
    std::vector<Case> cases{
        {[](Tensor x) { return ad::tanh(x); },
         [](double v) {
             double t = std::tanh(v);
             return -2.0 * t * (1.0 - t * t);
         }},
        {[](Tensor x) { return ad::sigmoid(x); },
         [](double v) {
             double s = 1.0 / (1.0 + std::exp(-v));
             return s * (1.0 - s) * (1.0 - 2.0 * s);
         }},
        {[](Tensor x) { return ad::exp(x); }, [](double v) { return std::exp(v); }},
        {[](Tensor x) { return ad::log(x); }, [](double v) { return -1.0 / (v * v); }},
        {[](Tensor x) { return ad::reciprocal(x); }, [](double v) { return 2.0 / (v * v * v); }},
    };
    for (auto& c : cases) {
        Graph g;
        Tensor x = g.input(Matrix::Constant(1, 1, at));
        Tensor d1 = g.backward(c.f(x), {x})[0];
        Tensor d2 = g.backward(d1, {x})[0];
        CHECK(d2.scalar() == doctest::Approx(c.second(at)).epsilon(1e-9));
    }
}

TEST_CASE("graph recomputation is deterministic") {
    Rng rng(7);
    Matrix x0 = random_matrix(rng, 4, 3);
    Graph g;
    Tensor x = g.input(x0);
    Tensor out = ad::sum(ad::tanh(ad::matmul(x, g.constant(random_matrix(rng, 3, 3)))));
    const double first = out.scalar();
    g.set_value(x, x0);
    g.recompute();
    CHECK(out.scalar() == first);  // bit-for-bit
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(13);
    Graph g;
    Tensor p = ad::softmax_rows(g.constant(random_matrix(rng, 6, 5, 3.0)));
    for (int r = 0; r < 6; ++r) {
        CHECK(std::abs(p.value().row(r).sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("clamp_feature zeroes the gradient of the replaced column") {
    Graph g;
    Matrix x0(2, 3);
    x0 << 1, 2, 3, 4, 5, 6;
    Tensor x = g.input(x0);
    Tensor clamped = ad::clamp_feature(x, 1, 9.0);
    CHECK(clamped.value()(0, 1) == 9.0);
    CHECK(clamped.value()(1, 1) == 9.0);
    CHECK(clamped.value()(0, 0) == 1.0);
    Tensor grad = g.backward(ad::sum(ad::square(clamped)), {x})[0];
    CHECK(grad.value().col(1).isZero(0.0));
    CHECK(grad.value()(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("adam") {
    SUBCASE("zero gradients leave parameters and moments untouched") {
        Vector p = Vector::Constant(3, 1.5);
        ad::AdamState st;
        ad::adam_step(p, Vector::Zero(3), st, 0.01);
        CHECK(p.isApprox(Vector::Constant(3, 1.5)));
        CHECK(st.m.isZero(0.0));
        CHECK(st.v.isZero(0.0));
    }
    SUBCASE("first step matches the bias-corrected hand computation") {
        Vector p = Vector::Zero(1);
        ad::AdamState st;
        ad::adam_step(p, Vector::Ones(1), st, 0.01);
        CHECK(p(0) == doctest::Approx(-0.01 * (1.0 / (1.0 + 1e-8))).epsilon(1e-12));
    }
    SUBCASE("identical runs are bitwise identical") {
        auto run = [] {
            Vector p = Vector::LinSpaced(4, -1.0, 2.0);
            ad::AdamState st;
            Rng rng(42);
            for (int i = 0; i < 50; ++i) {
                Vector grad(4);
                for (int j = 0; j < 4; ++j) grad(j) = rng.normal();
                ad::adam_step(p, grad, st, 0.003);
            }
            return p;
        };
        Vector a = run(), b = run();
        for (int j = 0; j < 4; ++j) CHECK(a(j) == b(j));
    }
}
