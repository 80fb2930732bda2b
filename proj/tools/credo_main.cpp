// credo: generate confounded synthetic data, train models with causal
// regularization, estimate causal effects and score disentanglement.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "credo/dataset_io.hpp"
#include "credo/effects.hpp"
#include "credo/metrics.hpp"
#include "credo/models.hpp"
#include "credo/regularizer.hpp"
#include "credo/scm.hpp"
#include "credo/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace credo;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
    if (!text.empty() && text.back() != '\n') out << "\n";
}

std::string stem_path(const std::string& path) {
    const std::size_t dot = path.find_last_of('.');
    const std::size_t slash = path.find_last_of('/');
    if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) {
        return path.substr(0, dot);
    }
    return path;
}

std::vector<int> parse_widths(const std::string& text) {
    std::vector<int> widths;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) widths.push_back(std::stoi(item));
    }
    return widths;
}

std::vector<std::string> split_names(const std::string& text) {
    std::vector<std::string> names;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) names.push_back(item);
    }
    return names;
}

struct ColumnTable {
    std::vector<std::string> names;
    Eigen::MatrixXd values;
};

ColumnTable column_table(const scm::Dataset& ds) {
    ColumnTable t;
    t.values.resize(ds.n, ds.factors.cols() + ds.confounders.cols() + ds.observations.cols());
    Eigen::Index k = 0;
    for (Eigen::Index c = 0; c < ds.factors.cols(); ++c, ++k) {
        t.names.push_back("g" + std::to_string(c));
        t.values.col(k) = ds.factors.col(c);
    }
    for (Eigen::Index c = 0; c < ds.confounders.cols(); ++c, ++k) {
        t.names.push_back("c" + std::to_string(c));
        t.values.col(k) = ds.confounders.col(c);
    }
    for (Eigen::Index c = 0; c < ds.observations.cols(); ++c, ++k) {
        t.names.push_back("x" + std::to_string(c));
        t.values.col(k) = ds.observations.col(c);
    }
    return t;
}

Eigen::MatrixXd select_columns(const ColumnTable& table, const std::vector<std::string>& names) {
    Eigen::MatrixXd out(table.values.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
        auto it = std::find(table.names.begin(), table.names.end(), names[k]);
        if (it == table.names.end()) {
            throw std::invalid_argument("unknown column '" + names[k] + "'");
        }
        out.col(static_cast<Eigen::Index>(k)) =
            table.values.col(std::distance(table.names.begin(), it));
    }
    return out;
}

scm::CausalGraph load_graph(const std::string& preset, const std::string& graph_file) {
    if (!graph_file.empty()) return scm::graph_from_json(read_file(graph_file));
    return scm::make_preset(preset);
}

/// Applies a JSON config file as defaults: keys become --key tokens unless the
/// flag already appears on the command line.
std::vector<std::string> merge_config(const std::vector<std::string>& args) {
    std::string config_path;
    for (std::size_t k = 0; k + 1 < args.size(); ++k) {
        if (args[k] == "--config") config_path = args[k + 1];
    }
    if (config_path.empty()) return args;

    json config = json::parse(read_file(config_path));
    std::vector<std::string> merged = args;
    for (const auto& [key, value] : config.items()) {
        const std::string flag = "--" + key;
        if (std::find(args.begin(), args.end(), flag) != args.end()) continue;
        if (value.is_array()) {
            for (const json& item : value) {
                merged.push_back(flag);
                merged.push_back(item.is_string() ? item.get<std::string>() : item.dump());
            }
        } else {
            merged.push_back(flag);
            merged.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    return merged;
}

std::string polyline_svg(const Eigen::VectorXd& grid,
                         const std::vector<std::pair<std::string, Eigen::VectorXd>>& curves,
                         const std::string& title) {
    const double width = 640.0, height = 400.0, margin = 48.0;
    double lo = grid.minCoeff(), hi = grid.maxCoeff();
    double ylo = 0.0, yhi = 0.0;
    for (const auto& [_, ys] : curves) {
        ylo = std::min(ylo, ys.minCoeff());
        yhi = std::max(yhi, ys.maxCoeff());
    }
    if (yhi - ylo < 1e-12) yhi = ylo + 1.0;
    auto sx = [&](double x) { return margin + (x - lo) / (hi - lo) * (width - 2 * margin); };
    auto sy = [&](double y) { return height - margin - (y - ylo) / (yhi - ylo) * (height - 2 * margin); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
           "viewBox=\"0 0 640 400\">\n";
    svg << "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    svg << "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << title
        << "</text>\n";
    // axes
    svg << "<line x1=\"" << scm::format_double(margin) << "\" y1=\"" << scm::format_double(sy(0.0))
        << "\" x2=\"" << scm::format_double(width - margin) << "\" y2=\""
        << scm::format_double(sy(0.0)) << "\" stroke=\"#999\"/>\n";
    svg << "<line x1=\"" << scm::format_double(sx(lo)) << "\" y1=\""
        << scm::format_double(margin) << "\" x2=\"" << scm::format_double(sx(lo)) << "\" y2=\""
        << scm::format_double(height - margin) << "\" stroke=\"#999\"/>\n";
    const char* colors[] = {"#1f66ad", "#d1495b", "#3a7d44"};
    int color = 0;
    for (const auto& [name, ys] : curves) {
        svg << "<polyline fill=\"none\" stroke=\"" << colors[color % 3] << "\" points=\"";
        for (Eigen::Index k = 0; k < grid.size(); ++k) {
            if (k) svg << " ";
            svg << scm::format_double(sx(grid(k))) << "," << scm::format_double(sy(ys(k)));
        }
        svg << "\"/>\n";
        svg << "<text x=\"" << scm::format_double(width - margin) << "\" y=\""
            << scm::format_double(margin + 16.0 * color) << "\" text-anchor=\"end\" font-size=\"12\" fill=\""
            << colors[color % 3] << "\">" << name << "</text>\n";
        ++color;
    }
    svg << "<text x=\"" << scm::format_double(margin) << "\" y=\""
        << scm::format_double(height - margin / 3) << "\" font-size=\"12\">"
        << scm::format_double(lo) << "</text>\n";
    svg << "<text x=\"" << scm::format_double(width - margin) << "\" y=\""
        << scm::format_double(height - margin / 3) << "\" text-anchor=\"end\" font-size=\"12\">"
        << scm::format_double(hi) << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
    std::string preset = "candle";
    std::string graph_file;
    long n = 1000;
    std::uint64_t seed = 0;
    std::string out;
    std::vector<std::string> interventions;
};

int run_generate(const GenerateArgs& args) {
    scm::CausalGraph graph = load_graph(args.preset, args.graph_file);
    std::vector<scm::Intervention> dos;
    for (const std::string& text : args.interventions) {
        const std::size_t eq = text.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("intervention '" + text + "' must look like node=value");
        }
        dos.push_back({text.substr(0, eq), std::stod(text.substr(eq + 1))});
    }
    scm::Dataset ds = dos.empty() ? scm::sample_observational(graph, args.n, args.seed)
                                  : scm::sample_interventional(graph, dos, args.n, args.seed);

    fs::create_directories(args.out);
    const std::string csv = (fs::path(args.out) / (graph.name + ".csv")).string();
    scm::write_dataset(ds, csv);

    json config{{"preset", args.preset},  {"graph", args.graph_file}, {"n", args.n},
                {"seed", args.seed},      {"out", args.out},          {"intervene", args.interventions},
                {"version", kToolVersion}};
    std::cout << "wrote " << ds.n << " rows to " << csv << "\n";
    std::cout << "resolved config: " << config.dump() << "\n";

    const Eigen::Index nf = ds.factors.cols();
    if (nf > 1) {
        std::cout << "factor correlations:\n";
        for (Eigen::Index i = 0; i < nf; ++i) {
            for (Eigen::Index j = i + 1; j < nf; ++j) {
                const auto a = ds.factors.col(i).array() - ds.factors.col(i).mean();
                const auto b = ds.factors.col(j).array() - ds.factors.col(j).mean();
                const double corr =
                    (a * b).mean() / std::sqrt(a.square().mean() * b.square().mean());
                std::cout << "  corr(" << ds.factor_names[static_cast<std::size_t>(i)] << ", "
                          << ds.factor_names[static_cast<std::size_t>(j)]
                          << ") = " << scm::format_double(corr) << "\n";
            }
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string kind;
    std::string data;
    std::string target;
    std::string inputs;
    std::string hidden = "32";
    std::string act = "tanh";
    int epochs = 100;
    double lr = 0.01;
    int batch = 64;
    std::uint64_t seed = 0;
    int latent = 8;
    double beta = 1.0;
    std::string credo_file;
    std::string out;
};

nn::MlpSpec build_mlp_spec(int in, const std::string& hidden, const std::string& act, int out,
                           nn::Head head, int blocks) {
    nn::MlpSpec spec;
    spec.widths.push_back(in);
    for (int h : parse_widths(hidden)) spec.widths.push_back(h);
    spec.widths.push_back(out);
    spec.activations.assign(spec.widths.size() - 2, nn::act_from_name(act));
    spec.head = head;
    spec.softmax_blocks = blocks;
    return spec;
}

int run_train(const TrainArgs& args) {
    scm::Dataset ds = scm::read_dataset(args.data);
    ColumnTable table = column_table(ds);

    json config{{"kind", args.kind},     {"data", args.data},   {"target", args.target},
                {"inputs", args.inputs}, {"hidden", args.hidden}, {"act", args.act},
                {"epochs", args.epochs}, {"lr", args.lr},       {"batch", args.batch},
                {"seed", args.seed},     {"latent", args.latent}, {"beta", args.beta},
                {"credo", args.credo_file}, {"out", args.out},  {"version", kToolVersion}};

    nn::TrainOptions opts;
    opts.epochs = args.epochs;
    opts.lr = args.lr;
    opts.batch = args.batch;
    opts.seed = args.seed;

    nn::TrainResult result;
    if (args.kind == "mlp") {
        if (args.target.empty()) throw std::invalid_argument("train mlp needs --target");
        std::vector<std::string> input_names;
        if (!args.inputs.empty()) {
            input_names = split_names(args.inputs);
        } else {
            for (const std::string& name : table.names) {
                if (name != args.target) input_names.push_back(name);
            }
        }
        Eigen::MatrixXd x = select_columns(table, input_names);
        Eigen::MatrixXd y = select_columns(table, {args.target});
        nn::MlpSpec spec = build_mlp_spec(static_cast<int>(x.cols()), args.hidden, args.act, 1,
                                          nn::Head::Regression, 1);
        if (!args.credo_file.empty()) {
            reg::CredoConfig credo = reg::config_from_json(read_file(args.credo_file));
            result = reg::train_with_credo(spec, x, y, credo, opts);
            config["priors"] = json::parse(reg::config_to_json(credo));
        } else {
            result = nn::train_mlp_regression(spec, x, y, opts);
        }
        config["resolved_inputs"] = input_names;
    } else if (args.kind == "classifier") {
        if (ds.observations.cols() == 0) {
            throw std::invalid_argument("train classifier needs observation (x*) columns");
        }
        Eigen::MatrixXd labels(ds.n, ds.factors.cols());
        for (long r = 0; r < ds.n; ++r) {
            for (Eigen::Index f = 0; f < ds.factors.cols(); ++f) {
                labels(r, f) = metrics::factor_class(ds.factors(r, f));
            }
        }
        nn::MlpSpec spec = build_mlp_spec(
            static_cast<int>(ds.observations.cols()), args.hidden, args.act,
            static_cast<int>(ds.factors.cols()) * metrics::factor_class_count(), nn::Head::Softmax,
            static_cast<int>(ds.factors.cols()));
        result = nn::train_classifier(spec, ds.observations, labels, opts);
        config["accuracy"] =
            nn::classifier_accuracy(spec, result.checkpoint.params, ds.observations, labels);
    } else if (args.kind == "vae") {
        if (ds.observations.cols() == 0) {
            throw std::invalid_argument("train vae needs observation (x*) columns");
        }
        const int d_obs = static_cast<int>(ds.observations.cols());
        nn::VaeSpec spec;
        spec.encoder =
            build_mlp_spec(d_obs, args.hidden, args.act, 2 * args.latent, nn::Head::Regression, 1);
        spec.decoder =
            build_mlp_spec(args.latent, args.hidden, args.act, d_obs, nn::Head::Regression, 1);
        spec.latent = args.latent;
        spec.beta = args.beta;
        result = nn::train_vae(spec, ds.observations, opts);
    } else {
        throw std::invalid_argument("unknown model kind '" + args.kind +
                                    "' (expected mlp, vae or classifier)");
    }

    nn::save_checkpoint(result.checkpoint, args.out);

    json history = json::array();
    for (std::size_t e = 0; e < result.history.size(); ++e) {
        history.push_back({{"epoch", e},
                           {"loss", result.history[e].loss},
                           {"erm", result.history[e].erm},
                           {"penalty", result.history[e].penalty}});
    }
    json report{{"version", kToolVersion}, {"config", config}, {"history", history}};
    write_file(stem_path(args.out) + "_history.json", report.dump(2));
    std::cout << "trained " << args.kind << ": final loss "
              << scm::format_double(result.checkpoint.meta.final_loss) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// effects

struct EffectsArgs {
    std::string checkpoint;
    std::string data;
    std::string inputs;
    int feature = 0;
    double grid_min = 0.0, grid_max = 0.0;
    int grid_steps = 21;
    int order = 1;
    std::string prior_file;
    std::string out;
    std::string svg;
    bool grid_given = false;
};

int run_effects(const EffectsArgs& args) {
    nn::Checkpoint ckpt = nn::load_checkpoint(args.checkpoint);
    scm::Dataset ds = scm::read_dataset(args.data);
    ColumnTable table = column_table(ds);

    Eigen::MatrixXd x;
    std::vector<std::string> input_names;
    if (!args.inputs.empty()) {
        input_names = split_names(args.inputs);
        x = select_columns(table, input_names);
    } else {
        // default: the generative-factor columns
        for (Eigen::Index c = 0; c < ds.factors.cols(); ++c)
            input_names.push_back("g" + std::to_string(c));
        x = ds.factors;
    }
    if (x.cols() != ckpt.mlp.input_width()) {
        throw std::invalid_argument("effects: selected " + std::to_string(x.cols()) +
                                    " columns but checkpoint expects " +
                                    std::to_string(ckpt.mlp.input_width()));
    }
    if (args.feature < 0 || args.feature >= x.cols()) {
        throw std::invalid_argument("effects: feature index " + std::to_string(args.feature) +
                                    " out of range for " + std::to_string(x.cols()) + " inputs");
    }

    double lo = args.grid_min, hi = args.grid_max;
    if (!args.grid_given) {
        lo = x.col(args.feature).minCoeff();
        hi = x.col(args.feature).maxCoeff();
    }
    Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(args.grid_steps, lo, hi);

    effects::DiffModel model = effects::mlp_model(ckpt.mlp, ckpt.params);
    effects::IdentityReport report =
        effects::verify_acde_identity(model, x, args.feature, grid, args.order);

    json config{{"checkpoint", args.checkpoint}, {"data", args.data},
                {"inputs", input_names},         {"feature", args.feature},
                {"grid_min", lo},                {"grid_max", hi},
                {"grid_steps", args.grid_steps}, {"order", args.order},
                {"prior", args.prior_file},      {"out", args.out},
                {"version", kToolVersion}};
    json out = json::parse(effects::identity_report_to_json(report));
    out["version"] = kToolVersion;
    out["config"] = config;

    std::vector<std::pair<std::string, Eigen::VectorXd>> curves;
    curves.push_back({"acde", report.acde_curve});
    if (!args.prior_file.empty()) {
        reg::CredoConfig credo = reg::config_from_json(read_file(args.prior_file));
        for (const reg::CausalPrior& prior : credo.priors) {
            if (prior.feature != args.feature) continue;
            Eigen::VectorXd overlay(grid.size());
            for (Eigen::Index k = 0; k < grid.size(); ++k) {
                overlay(k) =
                    reg::prior_value(prior, grid(k)) - reg::prior_value(prior, report.baseline);
            }
            curves.push_back({"prior", overlay});
            out["prior_curve"] = std::vector<double>(overlay.begin(), overlay.end());
        }
    }

    write_file(args.out, out.dump(2));
    const std::string svg_path = args.svg.empty() ? stem_path(args.out) + ".svg" : args.svg;
    write_file(svg_path,
               polyline_svg(grid, curves, "acde(alpha), feature " + std::to_string(args.feature)));
    std::cout << "identity deviation " << scm::format_double(report.max_deviation) << " ("
              << (report.pass ? "pass" : "FAIL") << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsArgs {
    std::string vae;
    std::string classifier;
    std::string data;
    std::string graph_file;
    double tau = 0.25;
    double delta = 1.0;
    std::uint64_t seed = 0;
    std::string out;
};

int run_metrics(const MetricsArgs& args) {
    nn::Checkpoint vae_ckpt = nn::load_checkpoint(args.vae);
    if (!vae_ckpt.vae) throw std::invalid_argument("metrics: '" + args.vae + "' is not a vae checkpoint");
    nn::Checkpoint cls_ckpt = nn::load_checkpoint(args.classifier);
    scm::Dataset ds = scm::read_dataset(args.data);

    scm::CausalGraph graph = args.graph_file.empty() ? scm::make_preset(ds.graph_name)
                                                     : scm::graph_from_json(read_file(args.graph_file));
    if (static_cast<Eigen::Index>(graph.factor_names.size()) != ds.factors.cols()) {
        throw std::invalid_argument("metrics: dataset factors do not match the graph");
    }
    if (vae_ckpt.vae->encoder.input_width() != ds.observations.cols()) {
        throw std::invalid_argument("metrics: vae expects width " +
                                    std::to_string(vae_ckpt.vae->encoder.input_width()) +
                                    " but data has " + std::to_string(ds.observations.cols()));
    }

    metrics::Encoder encoder = metrics::vae_encoder(*vae_ckpt.vae, vae_ckpt.params);
    metrics::Decoder decoder = metrics::vae_decoder(*vae_ckpt.vae, vae_ckpt.params);
    metrics::Classifier classifier = metrics::checkpoint_classifier(cls_ckpt.mlp, cls_ckpt.params);

    metrics::Attribution attribution =
        metrics::attribute_all(encoder, graph, ds, args.tau, args.delta);
    const double uc =
        metrics::unconfoundedness(attribution.sets, static_cast<int>(ds.factors.cols()));
    metrics::CgReport cg =
        metrics::counterfactual_generativeness(encoder, decoder, classifier, ds, attribution);

    json per_factor = json::array();
    for (const auto& pf : cg.per_factor) {
        per_factor.push_back({{"factor", pf.factor},
                              {"ace_target", pf.ace_target},
                              {"ace_complement", pf.ace_complement}});
    }
    json config{{"vae", args.vae},     {"classifier", args.classifier}, {"data", args.data},
                {"graph", args.graph_file}, {"tau", args.tau},          {"delta", args.delta},
                {"seed", args.seed},    {"out", args.out},              {"version", kToolVersion}};
    json report{{"version", kToolVersion},
                {"config", config},
                {"uc", uc},
                {"cg", cg.cg},
                {"per_factor", per_factor},
                {"tau", args.tau},
                {"seeds", {{"dataset", ds.seed}, {"run", args.seed}}}};
    write_file(args.out, report.dump(2));
    std::cout << "uc " << scm::format_double(uc) << "  cg " << scm::format_double(cg.cg) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"confounded causal data, gradient-matched training and disentanglement metrics"};
    app.require_subcommand(1);
    std::string config_stub;

    GenerateArgs gen;
    CLI::App* generate = app.add_subcommand("generate", "sample a dataset from a causal graph");
    generate->add_option("--preset", gen.preset, "graph preset (candle, triangle, regression)");
    generate->add_option("--graph", gen.graph_file, "graph json file (overrides --preset)");
    generate->add_option("--n", gen.n, "number of rows")->required();
    generate->add_option("--seed", gen.seed, "sampling seed");
    generate->add_option("--out", gen.out, "output directory")->required();
    generate->add_option("--intervene", gen.interventions, "do-intervention node=value");
    generate->add_option("--config", config_stub, "json config file with flag defaults");

    TrainArgs tr;
    CLI::App* train = app.add_subcommand("train", "train an mlp, vae or factor classifier");
    train->add_option("kind", tr.kind, "mlp, vae or classifier")->required();
    train->add_option("--data", tr.data, "dataset csv")->required();
    train->add_option("--target", tr.target, "target column for mlp regression");
    train->add_option("--inputs", tr.inputs, "comma-separated input columns");
    train->add_option("--hidden", tr.hidden, "hidden widths, e.g. 32,32");
    train->add_option("--act", tr.act, "activation (relu, tanh, identity)");
    train->add_option("--epochs", tr.epochs, "training epochs");
    train->add_option("--lr", tr.lr, "adam learning rate");
    train->add_option("--batch", tr.batch, "minibatch size");
    train->add_option("--seed", tr.seed, "training seed");
    train->add_option("--latent", tr.latent, "vae latent dimension");
    train->add_option("--beta", tr.beta, "vae kl weight");
    train->add_option("--credo", tr.credo_file, "causal prior config json");
    train->add_option("--out", tr.out, "checkpoint output path")->required();
    train->add_option("--config", config_stub, "json config file with flag defaults");

    EffectsArgs ef;
    CLI::App* effects_cmd = app.add_subcommand("effects", "acde curve and gradient identity check");
    effects_cmd->add_option("--checkpoint", ef.checkpoint, "mlp checkpoint")->required();
    effects_cmd->add_option("--data", ef.data, "dataset csv")->required();
    effects_cmd->add_option("--inputs", ef.inputs, "comma-separated input columns");
    effects_cmd->add_option("--feature", ef.feature, "input feature index")->required();
    auto* gmin = effects_cmd->add_option("--grid-min", ef.grid_min, "grid start");
    auto* gmax = effects_cmd->add_option("--grid-max", ef.grid_max, "grid end");
    gmin->needs(gmax);
    gmax->needs(gmin);
    effects_cmd->add_option("--grid-steps", ef.grid_steps, "grid points");
    effects_cmd->add_option("--order", ef.order, "derivative order (1 or 2)");
    effects_cmd->add_option("--prior", ef.prior_file, "overlay prior curve from config json");
    effects_cmd->add_option("--out", ef.out, "effects json output")->required();
    effects_cmd->add_option("--svg", ef.svg, "svg plot path (default: out stem + .svg)");
    effects_cmd->add_option("--config", config_stub, "json config file with flag defaults");

    MetricsArgs me;
    CLI::App* metrics_cmd = app.add_subcommand("metrics", "unconfoundedness and counterfactual generativeness");
    metrics_cmd->add_option("--vae", me.vae, "vae checkpoint")->required();
    metrics_cmd->add_option("--classifier", me.classifier, "factor classifier checkpoint")->required();
    metrics_cmd->add_option("--data", me.data, "dataset csv")->required();
    metrics_cmd->add_option("--graph", me.graph_file, "graph json (default: preset from sidecar)");
    metrics_cmd->add_option("--tau", me.tau, "attribution threshold");
    metrics_cmd->add_option("--delta", me.delta, "paired factor shift");
    metrics_cmd->add_option("--seed", me.seed, "run seed recorded in the report");
    metrics_cmd->add_option("--out", me.out, "metrics json output")->required();
    metrics_cmd->add_option("--config", config_stub, "json config file with flag defaults");

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = merge_config(args);
        std::vector<const char*> cargs{argv[0]};
        for (const std::string& a : args) cargs.push_back(a.c_str());
        app.parse(static_cast<int>(cargs.size()), cargs.data());

        if (generate->parsed()) return run_generate(gen);
        if (train->parsed()) {
            ef.grid_given = false;
            return run_train(tr);
        }
        if (effects_cmd->parsed()) {
            ef.grid_given = gmin->count() > 0;
            return run_effects(ef);
        }
        if (metrics_cmd->parsed()) return run_metrics(me);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const nn::TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ad::NonFiniteError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
