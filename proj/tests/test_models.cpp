#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "credo/models.hpp"
#include "credo/rng.hpp"
#include "credo/scm.hpp"

using namespace credo;
using nn::Act;
using nn::Head;
using nn::Matrix;
using nn::MlpSpec;
using nn::VaeSpec;
using nn::Vector;

namespace {

MlpSpec small_regressor(int in = 2) {
    MlpSpec spec;
    spec.widths = {in, 16, 1};
    spec.activations = {Act::Tanh};
    return spec;
}

VaeSpec small_vae(int d_obs, int latent) {
    VaeSpec spec;
    spec.encoder.widths = {d_obs, 32, 2 * latent};
    spec.encoder.activations = {Act::Tanh};
    spec.decoder.widths = {latent, 32, d_obs};
    spec.decoder.activations = {Act::Tanh};
    spec.latent = latent;
    return spec;
}

}  // namespace

TEST_CASE("deterministic initialization") {
    MlpSpec spec = small_regressor();
    Vector a = nn::init_params(spec, 5);
    Vector b = nn::init_params(spec, 5);
    CHECK(a == b);
    CHECK(a != nn::init_params(spec, 6));

    SUBCASE("biases start at zero") {
        // layout: W0 (2x16), b0 (16), W1 (16x1), b1 (1)
        CHECK(a.segment(32, 16).isZero(0.0));
        CHECK(a.tail(1).isZero(0.0));
    }
    SUBCASE("weight scale follows 1/sqrt(fan_in)") {
        MlpSpec wide;
        wide.widths = {100, 50, 1};
        wide.activations = {Act::Tanh};
        Vector p = nn::init_params(wide, 7);
        const auto w = p.head(5000);
        const double sd = std::sqrt(w.squaredNorm() / 5000.0);
        CHECK(sd == doctest::Approx(0.1).epsilon(0.10));
    }
}

TEST_CASE("mlp forward") {
    SUBCASE("zero weights give zero regression outputs") {
        MlpSpec spec = small_regressor();
        Vector params = Vector::Zero(spec.param_count());
        Matrix out = nn::mlp_eval(spec, params, Matrix::Random(5, 2));
        CHECK(out.isZero(0.0));
    }
    SUBCASE("softmax head on zero logits is uniform") {
        MlpSpec spec;
        spec.widths = {3, 4};
        spec.head = Head::Softmax;
        Matrix out = nn::mlp_eval(spec, Vector::Zero(spec.param_count()), Matrix::Random(2, 3));
        CHECK(out.isApproxToConstant(0.25, 1e-15));
    }
    SUBCASE("single linear layer computes the dot product") {
        MlpSpec spec;
        spec.widths = {2, 1};
        Vector params(3);
        params << 2.0, 3.0, 0.0;  // w = [2,3], b = 0
        Matrix x(1, 2);
        x << 1.0, 1.0;
        CHECK(nn::mlp_eval(spec, params, x)(0, 0) == doctest::Approx(5.0));
    }
    SUBCASE("width mismatch is rejected") {
        MlpSpec spec = small_regressor();
        CHECK_THROWS_AS(nn::mlp_eval(spec, nn::init_params(spec, 1), Matrix::Random(4, 3)),
                        std::invalid_argument);
    }
}

TEST_CASE("vae forward") {
    VaeSpec spec = small_vae(6, 3);
    Vector params = nn::init_params(spec, 9);
    Matrix x = Matrix::Random(4, 6);

    SUBCASE("zero noise collapses z to mu") {
        Matrix eps = Matrix::Zero(4, 3);
        auto fwd = nn::vae_eval(spec, params, x, 0, &eps);
        CHECK(fwd.z == fwd.mu);
        CHECK(fwd.mu == nn::vae_encode_mu(spec, params, x));
    }
    SUBCASE("zero decoder weights reconstruct the decoder bias") {
        Vector zeroed = params;
        zeroed.tail(spec.decoder.param_count()).setZero();
        // set the final decoder bias to a recognizable constant
        zeroed.tail(6).setConstant(0.75);
        auto fwd = nn::vae_eval(spec, zeroed, x, 1);
        CHECK(fwd.recon.isApproxToConstant(0.75, 1e-15));
    }
    SUBCASE("same seed draws identical z") {
        auto a = nn::vae_eval(spec, params, x, 31);
        auto b = nn::vae_eval(spec, params, x, 31);
        CHECK(a.z == b.z);
        CHECK(a.z != nn::vae_eval(spec, params, x, 32).z);
    }
}

TEST_CASE("elbo terms") {
    SUBCASE("standard-normal posterior has zero KL") {
        CHECK(nn::kl_term(Matrix::Zero(3, 2), Matrix::Zero(3, 2)) == 0.0);
    }
    SUBCASE("unit mean shift costs half a nat per dimension") {
        CHECK(nn::kl_term(Matrix::Ones(1, 1), Matrix::Zero(1, 1)) == doctest::Approx(0.5));
    }
    SUBCASE("perfect reconstruction with beta 0 is free") {
        Matrix x = Matrix::Random(4, 3);
        CHECK(nn::elbo_loss(Matrix::Ones(4, 2), Matrix::Zero(4, 2), x, x, 0.0) == 0.0);
    }
    SUBCASE("KL is nonnegative") {
        Rng rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            Matrix mu(2, 3), logvar(2, 3);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 3; ++j) {
                    mu(i, j) = rng.normal();
                    logvar(i, j) = rng.normal();
                }
            CHECK(nn::kl_term(mu, logvar) >= 0.0);
        }
    }
}

TEST_CASE("regression training learns the slope") {
    Rng rng(123);
    const long n = 400;
    Matrix x(n, 1), y(n, 1);
    for (long r = 0; r < n; ++r) {
        x(r, 0) = rng.normal();
        y(r, 0) = 2.0 * x(r, 0);
    }
    MlpSpec spec = small_regressor(1);
    nn::TrainOptions opts;
    opts.epochs = 200;
    opts.lr = 0.02;
    opts.seed = 1;
    auto result = nn::train_mlp_regression(spec, x, y, opts);

    Matrix pred = nn::mlp_eval(spec, result.checkpoint.params, x);
    const double slope = (x.col(0).array() * pred.col(0).array()).mean() /
                         x.col(0).array().square().mean();
    CHECK(slope == doctest::Approx(2.0).epsilon(0.025));
    CHECK(result.history.back().loss < result.history.front().loss);
}

TEST_CASE("training is deterministic given the seed") {
    Rng rng(7);
    Matrix x(100, 2), y(100, 1);
    for (long r = 0; r < 100; ++r) {
        x(r, 0) = rng.normal();
        x(r, 1) = rng.normal();
        y(r, 0) = x(r, 0) - x(r, 1);
    }
    MlpSpec spec = small_regressor();
    nn::TrainOptions opts;
    opts.epochs = 20;
    opts.seed = 99;
    auto a = nn::train_mlp_regression(spec, x, y, opts);
    auto b = nn::train_mlp_regression(spec, x, y, opts);
    CHECK(a.checkpoint.params == b.checkpoint.params);
}

TEST_CASE("divergent training aborts with the epoch index") {
    Matrix x(8, 1), y(8, 1);
    x.setConstant(1.0);
    y.setConstant(1e154);
    MlpSpec spec = small_regressor(1);
    nn::TrainOptions opts;
    opts.epochs = 5;
    opts.seed = 3;
    CHECK_THROWS_AS(nn::train_mlp_regression(spec, x, y, opts), nn::TrainingDiverged);
}

TEST_CASE("classifier separates linearly separable classes") {
    Rng rng(17);
    const long n = 300;
    Matrix x(n, 2), labels(n, 1);
    for (long r = 0; r < n; ++r) {
        x(r, 0) = rng.normal();
        x(r, 1) = rng.normal();
        labels(r, 0) = (x(r, 0) + x(r, 1) > 0.0) ? 1.0 : 0.0;
    }
    MlpSpec spec;
    spec.widths = {2, 16, 2};
    spec.activations = {Act::Tanh};
    spec.head = Head::Softmax;
    nn::TrainOptions opts;
    opts.epochs = 120;
    opts.lr = 0.02;
    opts.seed = 5;
    auto result = nn::train_classifier(spec, x, labels, opts);
    CHECK(nn::classifier_accuracy(spec, result.checkpoint.params, x, labels) >= 0.95);

    Matrix probs = nn::mlp_eval(spec, result.checkpoint.params, x);
    for (long r = 0; r < n; ++r) {
        CHECK(std::abs(probs.row(r).sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("vae training reduces the loss") {
    scm::Dataset ds = scm::sample_observational(scm::candle_preset(), 256, 71);
    VaeSpec spec = small_vae(16, 4);
    nn::TrainOptions opts;
    opts.epochs = 30;
    opts.lr = 0.005;
    opts.batch = 64;
    opts.seed = 2;
    auto result = nn::train_vae(spec, ds.observations, opts);
    CHECK(result.history.back().loss < result.history.front().loss);
}

TEST_CASE("checkpoint round-trip") {
    MlpSpec spec = small_regressor();
    nn::Checkpoint ckpt;
    ckpt.kind = "mlp";
    ckpt.mlp = spec;
    ckpt.params = nn::init_params(spec, 13);
    ckpt.meta.seed = 13;
    ckpt.meta.epochs = 42;
    ckpt.meta.final_loss = 0.5;

    const std::string path = "test_ckpt.json";
    nn::save_checkpoint(ckpt, path);
    nn::Checkpoint back = nn::load_checkpoint(path);
    std::remove(path.c_str());

    CHECK(back.params == ckpt.params);
    CHECK(back.meta.seed == 13);
    Matrix x = Matrix::Random(6, 2);
    CHECK(nn::mlp_eval(back.mlp, back.params, x) == nn::mlp_eval(spec, ckpt.params, x));

    SUBCASE("corrupted parameter count is rejected with both counts named") {
        std::string text = nn::checkpoint_to_json(ckpt);
        nn::Checkpoint truncated = ckpt;
        truncated.params = ckpt.params.head(10);
        CHECK_THROWS_WITH_AS(nn::checkpoint_from_json(nn::checkpoint_to_json(truncated)),
                             doctest::Contains("expected"), std::invalid_argument);
    }
}
