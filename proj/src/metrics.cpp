#include "credo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace credo::metrics {

Sample sample_at(const scm::Dataset& dataset, long row) {
    Sample s;
    s.factors = dataset.factors.row(row).transpose();
    s.confounders = dataset.confounders.row(row).transpose();
    s.observation = dataset.observations.row(row).transpose();
    return s;
}

Encoder vae_encoder(const nn::VaeSpec& spec, const Vector& params) {
    return [spec, params](const Sample& sample) -> Vector {
        return nn::vae_encode_mu(spec, params, sample.observation.transpose()).row(0).transpose();
    };
}

Decoder vae_decoder(const nn::VaeSpec& spec, const Vector& params) {
    return [spec, params](const Vector& latent) -> Vector {
        return nn::vae_decode(spec, params, latent.transpose()).row(0).transpose();
    };
}

Classifier checkpoint_classifier(const nn::MlpSpec& spec, const Vector& params) {
    if (spec.head != nn::Head::Softmax) {
        throw std::invalid_argument("checkpoint_classifier: spec head must be softmax");
    }
    const int blocks = spec.softmax_blocks;
    const int classes = spec.output_width() / blocks;
    return [spec, params, blocks, classes](const Vector& observation) -> Matrix {
        const Matrix probs = nn::mlp_eval(spec, params, observation.transpose());
        Matrix out(blocks, classes);
        for (int b = 0; b < blocks; ++b) out.row(b) = probs.row(0).segment(b * classes, classes);
        return out;
    };
}

int factor_class(double factor_value) { return factor_value > 0.0 ? 1 : 0; }
int factor_class_count() { return 2; }

std::vector<int> attribute_latents(const Vector& z, const Vector& z_pair, const Vector& latent_std,
                                   double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("attribute_latents: tau must be > 0");
    if (z.size() != z_pair.size() || z.size() != latent_std.size()) {
        throw std::invalid_argument("attribute_latents: latent size mismatch");
    }
    std::vector<int> dims;
    for (Eigen::Index d = 0; d < z.size(); ++d) {
        if (std::abs(z(d) - z_pair(d)) > tau * latent_std(d)) dims.push_back(static_cast<int>(d));
    }
    return dims;
}

Attribution attribute_all(const Encoder& encoder, const scm::CausalGraph& graph,
                          const scm::Dataset& dataset, double tau, double delta) {
    const long n = dataset.n;
    const int factors = static_cast<int>(dataset.factor_count());
    if (factors != static_cast<int>(graph.factor_names.size())) {
        throw std::invalid_argument("attribute_all: dataset/graph factor count mismatch");
    }
    if (n < 1) throw std::invalid_argument("attribute_all: empty dataset");

    Attribution out;
    const Vector z0 = encoder(sample_at(dataset, 0));
    const auto d = z0.size();
    out.latents.resize(n, d);
    out.latents.row(0) = z0.transpose();
    for (long r = 1; r < n; ++r) {
        out.latents.row(r) = encoder(sample_at(dataset, r)).transpose();
    }

    out.latent_std.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        const double m = out.latents.col(k).mean();
        out.latent_std(k) =
            std::sqrt((out.latents.col(k).array() - m).square().sum() / static_cast<double>(n));
    }

    out.sets.assign(static_cast<std::size_t>(n),
                    std::vector<std::vector<int>>(static_cast<std::size_t>(factors)));
    for (int f = 0; f < factors; ++f) {
        const scm::Dataset paired = scm::resample_shifted(graph, dataset, f, delta);
        for (long r = 0; r < n; ++r) {
            const Vector zp = encoder(sample_at(paired, r));
            out.sets[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)] =
                attribute_latents(out.latents.row(r).transpose(), zp, out.latent_std, tau);
        }
    }
    return out;
}

namespace {

double jaccard(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty() && b.empty()) return 0.0;  // no encoding anywhere: no confounding
    std::size_t ia = 0, ib = 0, inter = 0;
    while (ia < a.size() && ib < b.size()) {
        if (a[ia] == b[ib]) {
            ++inter;
            ++ia;
            ++ib;
        } else if (a[ia] < b[ib]) {
            ++ia;
        } else {
            ++ib;
        }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double unconfoundedness(const FactorSets& sets, int factor_count) {
    if (factor_count < 2) {
        throw std::invalid_argument("unconfoundedness: need at least two factors");
    }
    if (sets.empty()) throw std::invalid_argument("unconfoundedness: no samples");
    const double pair_count = static_cast<double>(factor_count) *
                              static_cast<double>(factor_count - 1) / 2.0;
    double acc = 0.0;
    for (const auto& per_factor : sets) {
        if (static_cast<int>(per_factor.size()) != factor_count) {
            throw std::invalid_argument("unconfoundedness: attribution row has " +
                                        std::to_string(per_factor.size()) + " factors, expected " +
                                        std::to_string(factor_count));
        }
        double sample_sum = 0.0;
        for (int i = 0; i < factor_count; ++i) {
            for (int j = i + 1; j < factor_count; ++j) {
                sample_sum += jaccard(per_factor[static_cast<std::size_t>(i)],
                                      per_factor[static_cast<std::size_t>(j)]);
            }
        }
        acc += sample_sum / pair_count;
    }
    return 1.0 - acc / static_cast<double>(sets.size());
}

Vector generate_counterfactual(const Encoder& encoder, const Decoder& decoder,
                               const Sample& sample, const std::vector<int>& dims,
                               const Vector& values) {
    if (static_cast<std::size_t>(values.size()) != dims.size()) {
        throw std::invalid_argument("generate_counterfactual: dims/values size mismatch");
    }
    Vector z = encoder(sample);
    for (std::size_t k = 0; k < dims.size(); ++k) {
        const int d = dims[k];
        if (d < 0 || d >= z.size()) {
            throw std::invalid_argument("generate_counterfactual: latent dim " +
                                        std::to_string(d) + " out of range");
        }
        z(d) = values(static_cast<Eigen::Index>(k));
    }
    return decoder(z);
}

double ace_on_factor(const Classifier& classifier, const Vector& x, const Vector& x_cf, int factor,
                     int cls) {
    const Matrix p = classifier(x);
    const Matrix p_cf = classifier(x_cf);
    if (factor < 0 || factor >= p.rows() || cls < 0 || cls >= p.cols()) {
        throw std::invalid_argument("ace_on_factor: factor/class out of range");
    }
    return std::abs(p(factor, cls) - p_cf(factor, cls));
}

CgReport counterfactual_generativeness(const Encoder& encoder, const Decoder& decoder,
                                       const Classifier& classifier, const scm::Dataset& dataset,
                                       const Attribution& attribution) {
    const long n = dataset.n;
    const int factors = static_cast<int>(dataset.factor_count());
    if (static_cast<long>(attribution.sets.size()) != n) {
        throw std::invalid_argument("counterfactual_generativeness: attribution covers " +
                                    std::to_string(attribution.sets.size()) + " samples, dataset " +
                                    std::to_string(n));
    }
    const int d = static_cast<int>(attribution.latents.cols());

    // donor = next sample (cyclically) whose factor class differs
    auto donor_of = [&](long row, int factor) -> long {
        const int cls = factor_class(dataset.factors(row, factor));
        for (long step = 1; step < n; ++step) {
            const long t = (row + step) % n;
            if (factor_class(dataset.factors(t, factor)) != cls) return t;
        }
        throw std::runtime_error("counterfactual_generativeness: factor " +
                                 std::to_string(factor) + " has a single class in the dataset");
    };

    CgReport report;
    double cg_acc = 0.0;
    for (int f = 0; f < factors; ++f) {
        double target_acc = 0.0;
        double complement_acc = 0.0;
        for (long r = 0; r < n; ++r) {
            const Sample sample = sample_at(dataset, r);
            const std::vector<int>& target_dims =
                attribution.sets[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)];
            std::vector<int> complement_dims;
            complement_dims.reserve(static_cast<std::size_t>(d));
            for (int k = 0; k < d; ++k) {
                if (!std::binary_search(target_dims.begin(), target_dims.end(), k)) {
                    complement_dims.push_back(k);
                }
            }

            const long donor = donor_of(r, f);
            auto donor_values = [&](const std::vector<int>& dims) {
                Vector v(static_cast<Eigen::Index>(dims.size()));
                for (std::size_t k = 0; k < dims.size(); ++k) {
                    v(static_cast<Eigen::Index>(k)) = attribution.latents(donor, dims[k]);
                }
                return v;
            };

            const Vector x_cf_target = generate_counterfactual(encoder, decoder, sample,
                                                               target_dims, donor_values(target_dims));
            const Vector x_cf_complement = generate_counterfactual(
                encoder, decoder, sample, complement_dims, donor_values(complement_dims));

            const int cls = factor_class(sample.factors(f));
            target_acc += ace_on_factor(classifier, sample.observation, x_cf_target, f, cls);
            complement_acc +=
                ace_on_factor(classifier, sample.observation, x_cf_complement, f, cls);
        }
        CgPerFactor pf;
        pf.factor = f;
        pf.ace_target = target_acc / static_cast<double>(n);
        pf.ace_complement = complement_acc / static_cast<double>(n);
        report.per_factor.push_back(pf);
        cg_acc += std::abs(pf.ace_target - pf.ace_complement);
    }
    report.cg = cg_acc / static_cast<double>(factors);
    return report;
}

}  // namespace credo::metrics
