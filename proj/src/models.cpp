#include "credo/models.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "credo/rng.hpp"

namespace credo::nn {

using nlohmann::json;

const char* act_name(Act a) {
    switch (a) {
        case Act::Relu: return "relu";
        case Act::Tanh: return "tanh";
        case Act::Identity: return "identity";
    }
    return "?";
}

Act act_from_name(const std::string& name) {
    if (name == "relu") return Act::Relu;
    if (name == "tanh") return Act::Tanh;
    if (name == "identity") return Act::Identity;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

void MlpSpec::validate() const {
    if (widths.size() < 2) {
        throw std::invalid_argument("mlp spec: need at least input and output widths");
    }
    for (int w : widths) {
        if (w <= 0) throw std::invalid_argument("mlp spec: widths must be positive");
    }
    if (activations.size() != widths.size() - 2) {
        throw std::invalid_argument("mlp spec: expected " + std::to_string(widths.size() - 2) +
                                    " activations, got " + std::to_string(activations.size()));
    }
    if (head == Head::Softmax) {
        if (softmax_blocks <= 0 || widths.back() % softmax_blocks != 0) {
            throw std::invalid_argument("mlp spec: output width " + std::to_string(widths.back()) +
                                        " is not divisible into " + std::to_string(softmax_blocks) +
                                        " softmax blocks");
        }
    }
}

long MlpSpec::param_count() const {
    long count = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        count += static_cast<long>(widths[l]) * widths[l + 1] + widths[l + 1];
    }
    return count;
}

void VaeSpec::validate() const {
    encoder.validate();
    decoder.validate();
    if (latent <= 0) throw std::invalid_argument("vae spec: latent dimension must be positive");
    if (encoder.output_width() != 2 * latent) {
        throw std::invalid_argument("vae spec: encoder output width " +
                                    std::to_string(encoder.output_width()) + " != 2*latent (" +
                                    std::to_string(2 * latent) + ")");
    }
    if (decoder.input_width() != latent) {
        throw std::invalid_argument("vae spec: decoder input width " +
                                    std::to_string(decoder.input_width()) + " != latent");
    }
    if (beta < 0.0) throw std::invalid_argument("vae spec: beta must be >= 0");
}

namespace {

void init_into(const MlpSpec& spec, Rng& rng, Vector& flat, long& offset) {
    for (int l = 0; l + 1 < static_cast<int>(spec.widths.size()); ++l) {
        const int fan_in = spec.widths[static_cast<std::size_t>(l)];
        const int fan_out = spec.widths[static_cast<std::size_t>(l) + 1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int k = 0; k < fan_in * fan_out; ++k) flat(offset++) = scale * rng.normal();
        for (int k = 0; k < fan_out; ++k) flat(offset++) = 0.0;
    }
}

}  // namespace

Vector init_params(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    Vector flat(spec.param_count());
    Rng rng(derive_seed(seed, 0x1417));
    long offset = 0;
    init_into(spec, rng, flat, offset);
    return flat;
}

Vector init_params(const VaeSpec& spec, std::uint64_t seed) {
    spec.validate();
    Vector flat(spec.param_count());
    Rng rng(derive_seed(seed, 0x1417));
    long offset = 0;
    init_into(spec.encoder, rng, flat, offset);
    init_into(spec.decoder, rng, flat, offset);
    return flat;
}

std::vector<ad::Tensor> param_inputs(ad::Graph& graph, const MlpSpec& spec, const Vector& flat,
                                     long offset) {
    std::vector<ad::Tensor> params;
    for (int l = 0; l + 1 < static_cast<int>(spec.widths.size()); ++l) {
        const int rows = spec.widths[static_cast<std::size_t>(l)];
        const int cols = spec.widths[static_cast<std::size_t>(l) + 1];
        Matrix w(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) w(i, j) = flat(offset + i * cols + j);
        offset += static_cast<long>(rows) * cols;
        Matrix b(1, cols);
        for (int j = 0; j < cols; ++j) b(0, j) = flat(offset + j);
        offset += cols;
        params.push_back(graph.input(std::move(w)));
        params.push_back(graph.input(std::move(b)));
    }
    return params;
}

Vector flatten_grads(const std::vector<ad::Tensor>& grads) {
    long total = 0;
    for (const ad::Tensor& g : grads) total += g.value().size();
    Vector flat(total);
    long offset = 0;
    for (const ad::Tensor& g : grads) {
        const Matrix& m = g.value();
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) flat(offset++) = m(i, j);
    }
    return flat;
}

namespace {

ad::Tensor apply_act(Act act, const ad::Tensor& x) {
    switch (act) {
        case Act::Relu: return ad::relu(x);
        case Act::Tanh: return ad::tanh(x);
        case Act::Identity: return x;
    }
    return x;
}

ad::Tensor apply_head(const MlpSpec& spec, const ad::Tensor& logits) {
    if (spec.head == Head::Regression) return logits;
    const int block = spec.output_width() / spec.softmax_blocks;
    ad::Tensor out;
    for (int b = 0; b < spec.softmax_blocks; ++b) {
        ad::Tensor p = ad::softmax_rows(ad::slice_cols(logits, b * block, block));
        out = b == 0 ? p : ad::concat(out, p);
    }
    return out;
}

}  // namespace

ad::Tensor mlp_forward(ad::Graph& graph, const MlpSpec& spec,
                       const std::vector<ad::Tensor>& params, const ad::Tensor& x) {
    if (static_cast<int>(x.cols()) != spec.input_width()) {
        throw std::invalid_argument("mlp_forward: batch width " + std::to_string(x.cols()) +
                                    " != input width " + std::to_string(spec.input_width()));
    }
    (void)graph;
    ad::Tensor h = x;
    const int layers = spec.layer_count();
    for (int l = 0; l < layers; ++l) {
        h = ad::affine(h, params[static_cast<std::size_t>(2 * l)],
                       params[static_cast<std::size_t>(2 * l) + 1]);
        if (l + 1 < layers) h = apply_act(spec.activations[static_cast<std::size_t>(l)], h);
    }
    return apply_head(spec, h);
}

Matrix mlp_eval(const MlpSpec& spec, const Vector& flat, const Matrix& x) {
    ad::Graph graph;
    std::vector<ad::Tensor> params = param_inputs(graph, spec, flat);
    return mlp_forward(graph, spec, params, graph.input(x)).value();
}

VaeForward vae_eval(const VaeSpec& spec, const Vector& flat, const Matrix& x, std::uint64_t seed,
                    const Matrix* eps) {
    spec.validate();
    Matrix enc = mlp_eval(spec.encoder, flat.head(spec.encoder.param_count()), x);
    VaeForward out;
    out.mu = enc.leftCols(spec.latent);
    out.logvar = enc.rightCols(spec.latent);
    Matrix noise;
    if (eps) {
        noise = *eps;
    } else {
        noise.resize(x.rows(), spec.latent);
        Rng rng(derive_seed(seed, 0xe95));
        for (Eigen::Index r = 0; r < noise.rows(); ++r)
            for (Eigen::Index c = 0; c < noise.cols(); ++c) noise(r, c) = rng.normal();
    }
    out.z = out.mu + (out.logvar.array() * 0.5).exp().matrix().cwiseProduct(noise);
    out.recon = mlp_eval(spec.decoder, flat.tail(spec.decoder.param_count()), out.z);
    return out;
}

Matrix vae_encode_mu(const VaeSpec& spec, const Vector& flat, const Matrix& x) {
    Matrix enc = mlp_eval(spec.encoder, flat.head(spec.encoder.param_count()), x);
    return enc.leftCols(spec.latent);
}

Matrix vae_decode(const VaeSpec& spec, const Vector& flat, const Matrix& z) {
    return mlp_eval(spec.decoder, flat.tail(spec.decoder.param_count()), z);
}

double kl_term(const Matrix& mu, const Matrix& logvar) {
    const auto per_element =
        mu.array().square() + logvar.array().exp() - 1.0 - logvar.array();
    return 0.5 * per_element.sum() / static_cast<double>(mu.rows());
}

double elbo_loss(const Matrix& mu, const Matrix& logvar, const Matrix& recon,
                 const Matrix& target, double beta) {
    if (recon.rows() != target.rows() || recon.cols() != target.cols()) {
        throw std::invalid_argument("elbo_loss: reconstruction/target shape mismatch");
    }
    const double rec = (recon - target).array().square().sum() / static_cast<double>(recon.rows());
    return rec + beta * kl_term(mu, logvar);
}

namespace {

std::vector<long> epoch_order(long n, Rng& rng) {
    std::vector<long> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0L);
    for (long i = n - 1; i > 0; --i) {
        const long j = static_cast<long>(rng.below(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    return order;
}

Matrix gather_rows(const Matrix& m, const std::vector<long>& order, long begin, long count) {
    Matrix out(count, m.cols());
    for (long r = 0; r < count; ++r) out.row(r) = m.row(order[static_cast<std::size_t>(begin + r)]);
    return out;
}

struct LossNodes {
    ad::Tensor erm;
    ad::Tensor penalty;  // invalid when absent
};

template <typename BatchLoss>
TrainResult run_training(const MlpSpec& spec, Vector params, const Matrix& x,
                         const Matrix& targets, const TrainOptions& opts,
                         const BatchLoss& batch_loss, const char* kind) {
    if (opts.epochs <= 0) throw std::invalid_argument("train: epochs must be positive");
    if (opts.batch <= 0) throw std::invalid_argument("train: batch size must be positive");
    const long n = x.rows();
    ad::AdamState adam;
    Rng shuffle_rng(derive_seed(opts.seed, 0x5417));
    std::vector<EpochStats> history;
    history.reserve(static_cast<std::size_t>(opts.epochs));

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::vector<long> order = epoch_order(n, shuffle_rng);
        double erm_acc = 0.0, pen_acc = 0.0;
        long batches = 0;
        for (long begin = 0; begin < n; begin += opts.batch) {
            const long count = std::min<long>(opts.batch, n - begin);
            Matrix xb = gather_rows(x, order, begin, count);
            Matrix tb = gather_rows(targets, order, begin, count);

            try {
                ad::Graph graph;
                std::vector<ad::Tensor> pnodes = param_inputs(graph, spec, params);
                ad::Tensor xnode = graph.input(std::move(xb));
                LossNodes lossnodes = batch_loss(graph, spec, pnodes, xnode, tb, epoch, batches);
                ad::Tensor loss = lossnodes.penalty.valid()
                                      ? ad::add(lossnodes.erm, lossnodes.penalty)
                                      : lossnodes.erm;
                erm_acc += lossnodes.erm.scalar();
                pen_acc += lossnodes.penalty.valid() ? lossnodes.penalty.scalar() : 0.0;
                ++batches;

                Vector grads = flatten_grads(graph.backward(loss, pnodes));
                ad::adam_step(params, grads, adam, opts.lr);
            } catch (const ad::NonFiniteError&) {
                throw TrainingDiverged(epoch, std::string(kind) + ": loss diverged at epoch " +
                                                  std::to_string(epoch));
            }
        }
        EpochStats stats;
        stats.erm = erm_acc / static_cast<double>(batches);
        stats.penalty = pen_acc / static_cast<double>(batches);
        stats.loss = stats.erm + stats.penalty;
        history.push_back(stats);
    }

    TrainResult result;
    result.checkpoint.kind = kind;
    result.checkpoint.mlp = spec;
    result.checkpoint.params = std::move(params);
    result.checkpoint.meta.seed = opts.seed;
    result.checkpoint.meta.epochs = opts.epochs;
    result.checkpoint.meta.final_loss = history.back().loss;
    result.checkpoint.meta.final_penalty = history.back().penalty;
    result.history = std::move(history);
    return result;
}

}  // namespace

TrainResult train_mlp_regression(const MlpSpec& spec, const Matrix& x, const Matrix& y,
                                 const TrainOptions& opts, const PenaltyBuilder& penalty) {
    spec.validate();
    if (x.cols() != spec.input_width()) {
        throw std::invalid_argument("train: data width " + std::to_string(x.cols()) +
                                    " != spec input width " + std::to_string(spec.input_width()));
    }
    if (y.rows() != x.rows() || y.cols() != spec.output_width()) {
        throw std::invalid_argument("train: target shape mismatch");
    }
    auto batch_loss = [&](ad::Graph& graph, const MlpSpec& sp,
                          const std::vector<ad::Tensor>& pnodes, const ad::Tensor& xnode,
                          const Matrix& tb, int, long) -> LossNodes {
        ad::Tensor out = mlp_forward(graph, sp, pnodes, xnode);
        ad::Tensor erm = ad::mean(ad::square(ad::sub(out, graph.constant(tb))));
        LossNodes nodes{erm, ad::Tensor()};
        if (penalty) nodes.penalty = penalty(graph, xnode, out, pnodes);
        return nodes;
    };
    return run_training(spec, init_params(spec, opts.seed), x, y, opts, batch_loss, "mlp");
}

TrainResult train_classifier(const MlpSpec& spec, const Matrix& x, const Matrix& labels,
                             const TrainOptions& opts) {
    spec.validate();
    if (spec.head != Head::Softmax) {
        throw std::invalid_argument("train_classifier: spec head must be softmax");
    }
    if (labels.rows() != x.rows() || labels.cols() != spec.softmax_blocks) {
        throw std::invalid_argument("train_classifier: labels must be rows x blocks");
    }
    const int block = spec.output_width() / spec.softmax_blocks;
    auto batch_loss = [&](ad::Graph& graph, const MlpSpec& sp,
                          const std::vector<ad::Tensor>& pnodes, const ad::Tensor& xnode,
                          const Matrix& tb, int, long) -> LossNodes {
        // logits, then per-block cross-entropy on one-hot targets
        ad::Tensor h = xnode;
        const int layers = sp.layer_count();
        for (int l = 0; l < layers; ++l) {
            h = ad::affine(h, pnodes[static_cast<std::size_t>(2 * l)],
                           pnodes[static_cast<std::size_t>(2 * l) + 1]);
            if (l + 1 < layers) h = apply_act(sp.activations[static_cast<std::size_t>(l)], h);
        }
        ad::Tensor loss;
        for (int b = 0; b < sp.softmax_blocks; ++b) {
            Matrix onehot = Matrix::Zero(tb.rows(), block);
            for (Eigen::Index r = 0; r < tb.rows(); ++r) {
                onehot(r, static_cast<Eigen::Index>(tb(r, b))) = 1.0;
            }
            ad::Tensor logp = ad::log_softmax_rows(ad::slice_cols(h, b * block, block));
            ad::Tensor nll = ad::scale(ad::sum(ad::mul(logp, graph.constant(onehot))),
                                       -1.0 / static_cast<double>(tb.rows()));
            loss = b == 0 ? nll : ad::add(loss, nll);
        }
        return LossNodes{loss, ad::Tensor()};
    };
    return run_training(spec, init_params(spec, opts.seed), x, labels, opts, batch_loss,
                        "classifier");
}

double classifier_accuracy(const MlpSpec& spec, const Vector& params, const Matrix& x,
                           const Matrix& labels) {
    const Matrix probs = mlp_eval(spec, params, x);
    const int block = spec.output_width() / spec.softmax_blocks;
    long hits = 0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (int b = 0; b < spec.softmax_blocks; ++b) {
            Eigen::Index argmax = 0;
            probs.row(r).segment(b * block, block).maxCoeff(&argmax);
            if (argmax == static_cast<Eigen::Index>(labels(r, b))) ++hits;
        }
    }
    return static_cast<double>(hits) /
           (static_cast<double>(x.rows()) * static_cast<double>(spec.softmax_blocks));
}

TrainResult train_vae(const VaeSpec& spec, const Matrix& x, const TrainOptions& opts) {
    spec.validate();
    if (x.cols() != spec.encoder.input_width()) {
        throw std::invalid_argument("train_vae: data width " + std::to_string(x.cols()) +
                                    " != encoder input width " +
                                    std::to_string(spec.encoder.input_width()));
    }

    Vector params = init_params(spec, opts.seed);
    const long enc_count = spec.encoder.param_count();
    ad::AdamState adam;
    Rng shuffle_rng(derive_seed(opts.seed, 0x5417));
    std::vector<EpochStats> history;
    const long n = x.rows();

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::vector<long> order = epoch_order(n, shuffle_rng);
        double loss_acc = 0.0;
        long batches = 0;
        for (long begin = 0; begin < n; begin += opts.batch) {
            const long count = std::min<long>(opts.batch, n - begin);
            Matrix xb = gather_rows(x, order, begin, count);

            Matrix eps(count, spec.latent);
            Rng eps_rng(derive_seed(opts.seed, 0xe95, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(batches)));
            for (Eigen::Index r = 0; r < count; ++r)
                for (int c = 0; c < spec.latent; ++c) eps(r, c) = eps_rng.normal();

            try {
                ad::Graph graph;
                std::vector<ad::Tensor> enc_params = param_inputs(graph, spec.encoder, params, 0);
                std::vector<ad::Tensor> dec_params =
                    param_inputs(graph, spec.decoder, params, enc_count);
                ad::Tensor xnode = graph.input(xb);
                ad::Tensor enc = mlp_forward(graph, spec.encoder, enc_params, xnode);
                ad::Tensor mu = ad::slice_cols(enc, 0, spec.latent);
                ad::Tensor logvar = ad::slice_cols(enc, spec.latent, spec.latent);
                ad::Tensor z = ad::add(
                    mu, ad::mul(ad::exp(ad::scale(logvar, 0.5)), graph.constant(eps)));
                ad::Tensor recon = mlp_forward(graph, spec.decoder, dec_params, z);

                const double inv_b = 1.0 / static_cast<double>(count);
                ad::Tensor rec_loss =
                    ad::scale(ad::sum(ad::square(ad::sub(recon, xnode))), inv_b);
                ad::Tensor ones =
                    graph.constant(Matrix::Ones(count, spec.latent));
                ad::Tensor kl = ad::scale(
                    ad::sum(ad::sub(ad::add(ad::square(mu), ad::exp(logvar)), ad::add(ones, logvar))),
                    0.5 * inv_b);
                ad::Tensor loss = ad::add(rec_loss, ad::scale(kl, spec.beta));

                loss_acc += loss.scalar();
                ++batches;

                std::vector<ad::Tensor> all_params = enc_params;
                all_params.insert(all_params.end(), dec_params.begin(), dec_params.end());
                Vector grads = flatten_grads(graph.backward(loss, all_params));
                ad::adam_step(params, grads, adam, opts.lr);
            } catch (const ad::NonFiniteError&) {
                throw TrainingDiverged(epoch,
                                       "vae: loss diverged at epoch " + std::to_string(epoch));
            }
        }
        EpochStats stats;
        stats.loss = stats.erm = loss_acc / static_cast<double>(batches);
        history.push_back(stats);
    }

    TrainResult result;
    result.checkpoint.kind = "vae";
    result.checkpoint.mlp = spec.encoder;
    result.checkpoint.vae = spec;
    result.checkpoint.params = std::move(params);
    result.checkpoint.meta.seed = opts.seed;
    result.checkpoint.meta.epochs = opts.epochs;
    result.checkpoint.meta.final_loss = history.back().loss;
    result.history = std::move(history);
    return result;
}

namespace {

json mlp_spec_to_json(const MlpSpec& spec) {
    std::vector<std::string> acts;
    for (Act a : spec.activations) acts.emplace_back(act_name(a));
    return {{"widths", spec.widths},
            {"activations", acts},
            {"head", spec.head == Head::Regression ? "regression" : "softmax"},
            {"blocks", spec.softmax_blocks}};
}

MlpSpec mlp_spec_from_json(const json& j) {
    MlpSpec spec;
    spec.widths = j.at("widths").get<std::vector<int>>();
    for (const std::string& name : j.at("activations").get<std::vector<std::string>>()) {
        spec.activations.push_back(act_from_name(name));
    }
    const std::string head = j.at("head").get<std::string>();
    if (head == "regression") {
        spec.head = Head::Regression;
    } else if (head == "softmax") {
        spec.head = Head::Softmax;
    } else {
        throw std::invalid_argument("checkpoint: unknown head '" + head + "'");
    }
    spec.softmax_blocks = j.at("blocks").get<int>();
    spec.validate();
    return spec;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    json j;
    j["kind"] = ckpt.kind;
    j["spec"] = mlp_spec_to_json(ckpt.mlp);
    if (ckpt.vae) {
        j["vae_spec"] = {{"encoder", mlp_spec_to_json(ckpt.vae->encoder)},
                         {"latent", ckpt.vae->latent},
                         {"decoder", mlp_spec_to_json(ckpt.vae->decoder)},
                         {"beta", ckpt.vae->beta}};
    }
    j["params"] = std::vector<double>(ckpt.params.begin(), ckpt.params.end());
    j["metadata"] = {{"seed", ckpt.meta.seed},
                     {"epochs", ckpt.meta.epochs},
                     {"final_loss", ckpt.meta.final_loss},
                     {"final_penalty", ckpt.meta.final_penalty}};
    return j.dump(2);
}

Checkpoint checkpoint_from_json(const std::string& text) {
    json j = json::parse(text);
    Checkpoint ckpt;
    ckpt.kind = j.at("kind").get<std::string>();
    ckpt.mlp = mlp_spec_from_json(j.at("spec"));
    long expected = ckpt.mlp.param_count();
    if (j.contains("vae_spec")) {
        VaeSpec vae;
        vae.encoder = mlp_spec_from_json(j["vae_spec"].at("encoder"));
        vae.decoder = mlp_spec_from_json(j["vae_spec"].at("decoder"));
        vae.latent = j["vae_spec"].at("latent").get<int>();
        vae.beta = j["vae_spec"].at("beta").get<double>();
        vae.validate();
        ckpt.vae = vae;
        expected = vae.param_count();
    }
    auto params = j.at("params").get<std::vector<double>>();
    if (static_cast<long>(params.size()) != expected) {
        throw std::invalid_argument("checkpoint: expected " + std::to_string(expected) +
                                    " params, found " + std::to_string(params.size()));
    }
    ckpt.params = Eigen::Map<Vector>(params.data(), static_cast<Eigen::Index>(params.size()));
    const json& meta = j.at("metadata");
    ckpt.meta.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.meta.epochs = meta.at("epochs").get<int>();
    ckpt.meta.final_loss = meta.at("final_loss").get<double>();
    ckpt.meta.final_penalty = meta.value("final_penalty", 0.0);
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << checkpoint_to_json(ckpt) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return checkpoint_from_json(text);
}

}  // namespace credo::nn
