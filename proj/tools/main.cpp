// Batch front-end: every capability of the library as a subcommand that
// reads JSON/CSV inputs and writes machine-readable results. Config
// precedence is flags > --config file > built-in defaults; unknown config
// keys are rejected. Exit codes: 0 success, 1 usage or I/O failure,
// 2 domain condition unmet (not well-posed, bipartite input,
// non-convergence, gradient check over threshold).

#include <CLI11.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dignn/data.hpp"
#include "dignn/equilibrium.hpp"
#include "dignn/graph.hpp"
#include "dignn/laplacian.hpp"
#include "dignn/model.hpp"
#include "dignn/oversmoothing.hpp"
#include "dignn/rng.hpp"
#include "dignn/serialize.hpp"
#include "dignn/spectral.hpp"
#include "dignn/train.hpp"

namespace {

using dignn::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitDomain = 2;

/// Binds config-file keys to CLI options so the file can fill any value
/// the command line left at its default, and unknown keys fail loudly.
class ConfigBinder {
public:
    void bind(CLI::Option* opt, const std::string& key, std::function<void(const json&)> apply) {
        entries_[key] = {opt, std::move(apply)};
    }

    void apply_file(const std::string& path) const {
        std::ifstream in(path);
        if (!in) throw dignn::IoError("cannot open config file: " + path);
        json doc;
        try {
            in >> doc;
        } catch (const json::exception& e) {
            throw dignn::ParseError(path + ": " + std::string(e.what()));
        }
        if (!doc.is_object()) throw dignn::ParseError(path + ": config must be a JSON object");
        for (const auto& [key, value] : doc.items()) {
            const auto it = entries_.find(key);
            if (it == entries_.end()) {
                throw dignn::InvalidArgument("config key `" + key + "` is not recognized");
            }
            if (it->second.opt != nullptr && it->second.opt->count() > 0) {
                continue;  // explicit flag wins over the file
            }
            it->second.apply(value);
        }
    }

private:
    struct Entry {
        CLI::Option* opt;
        std::function<void(const json&)> apply;
    };
    std::map<std::string, Entry> entries_;
};

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts* common, ConfigBinder* binder) {
    cmd->add_option("--config", common->config_path, "JSON config file");
    CLI::Option* seed = cmd->add_option("--seed", common->seed, "Global random seed");
    CLI::Option* out = cmd->add_option("--out", common->out_dir, "Output directory");
    CLI::Option* threads =
        cmd->add_option("--threads", common->threads,
                        "Worker threads (all kernels are currently sequential)")
            ->check(CLI::PositiveNumber);
    binder->bind(seed, "seed", [common](const json& v) { common->seed = v.get<std::uint64_t>(); });
    binder->bind(out, "out", [common](const json& v) { common->out_dir = v.get<std::string>(); });
    binder->bind(threads, "threads", [common](const json& v) { common->threads = v.get<int>(); });
}

void finish_common(const CommonOpts& common) {
    Eigen::setNbThreads(common.threads);
    std::filesystem::create_directories(common.out_dir);
}

std::string out_path(const CommonOpts& common, const std::string& name) {
    return (std::filesystem::path(common.out_dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw dignn::IoError("cannot write " + path);
    out << text;
}

void write_json(const std::string& path, const json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

dignn::GeometryParams seeded_geometry(int feature_dim, int hidden, double epsilon,
                                      std::uint64_t seed) {
    dignn::Rng rng(seed);
    dignn::GeometryParams geo;
    geo.theta_chi = dignn::init_uniform_matrix(rng, hidden, feature_dim);
    geo.theta_phi = dignn::init_uniform_matrix(rng, hidden, hidden);
    geo.theta_varphi = dignn::init_uniform_matrix(rng, hidden, feature_dim);
    geo.epsilon = epsilon;
    return geo;
}

dignn::Matrix seeded_features(int n, int dim, std::uint64_t seed) {
    dignn::Rng rng(seed);
    dignn::Matrix x(n, dim);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < dim; ++j) x(i, j) = rng.normal();
    }
    return x;
}

/// Dataset source shared by train/eval/gradcheck: SBM synthesis when
/// --synth is set, files otherwise.
struct DatasetOpts {
    bool synth = false;
    std::string edges, features, labels, splits;
    int n = 200;
    int classes = 2;
    double p_in = 0.1;
    double p_out = 0.01;
    int feature_dim = 8;
    double noise = 1.0;
};

void add_dataset_opts(CLI::App* cmd, DatasetOpts* dso, ConfigBinder* binder) {
    CLI::Option* synth =
        cmd->add_flag("--synth", dso->synth, "Generate an SBM dataset instead of reading files");
    CLI::Option* edges = cmd->add_option("--edges", dso->edges, "Edge list path");
    CLI::Option* features = cmd->add_option("--features", dso->features, "Feature CSV path");
    CLI::Option* labels = cmd->add_option("--labels", dso->labels, "Label file path");
    CLI::Option* splits = cmd->add_option("--splits", dso->splits, "Split JSON path (optional)");
    CLI::Option* n = cmd->add_option("--n", dso->n, "SBM node count");
    CLI::Option* classes = cmd->add_option("--classes", dso->classes, "SBM class count");
    CLI::Option* p_in = cmd->add_option("--p-in", dso->p_in, "SBM within-class edge probability");
    CLI::Option* p_out = cmd->add_option("--p-out", dso->p_out, "SBM cross-class edge probability");
    CLI::Option* fdim = cmd->add_option("--feature-dim", dso->feature_dim, "SBM feature dimension");
    CLI::Option* noise = cmd->add_option("--noise", dso->noise, "SBM feature noise scale");
    binder->bind(synth, "synth", [dso](const json& v) { dso->synth = v.get<bool>(); });
    binder->bind(edges, "edges", [dso](const json& v) { dso->edges = v.get<std::string>(); });
    binder->bind(features, "features",
                 [dso](const json& v) { dso->features = v.get<std::string>(); });
    binder->bind(labels, "labels", [dso](const json& v) { dso->labels = v.get<std::string>(); });
    binder->bind(splits, "splits", [dso](const json& v) { dso->splits = v.get<std::string>(); });
    binder->bind(n, "n", [dso](const json& v) { dso->n = v.get<int>(); });
    binder->bind(classes, "classes", [dso](const json& v) { dso->classes = v.get<int>(); });
    binder->bind(p_in, "p_in", [dso](const json& v) { dso->p_in = v.get<double>(); });
    binder->bind(p_out, "p_out", [dso](const json& v) { dso->p_out = v.get<double>(); });
    binder->bind(fdim, "feature_dim", [dso](const json& v) { dso->feature_dim = v.get<int>(); });
    binder->bind(noise, "noise", [dso](const json& v) { dso->noise = v.get<double>(); });
}

dignn::Dataset resolve_dataset(const DatasetOpts& dso, std::uint64_t seed) {
    if (dso.synth) {
        return dignn::synth_sbm(dso.n, dso.classes, dso.p_in, dso.p_out, dso.feature_dim,
                                dso.noise, seed);
    }
    if (dso.edges.empty() || dso.features.empty() || dso.labels.empty()) {
        throw dignn::InvalidArgument(
            "dataset: pass --synth or all of --edges/--features/--labels");
    }
    return dignn::load_dataset(dso.edges, dso.features, dso.labels, dso.splits);
}

/// Model hyperparameters shared by train/eval/gradcheck.
struct ModelOpts {
    std::string kind = "rw";
    std::string preprocess = "mlp";
    int preprocess_layers = 1;
    int hidden = 64;
    double mu = 2.5;
    double tol = 1e-6;
    int max_iter = 10;
    double dropout = 0.0;
    int geometry_hidden = 16;
    double epsilon = 1e-6;
    bool no_batch_norm = false;
};

void add_model_opts(CLI::App* cmd, ModelOpts* mo, ConfigBinder* binder) {
    CLI::Option* kind = cmd->add_option("--kind", mo->kind, "Laplacian kind: rw|param");
    CLI::Option* pre = cmd->add_option("--preprocess", mo->preprocess, "Preprocessing: mlp|ax");
    CLI::Option* layers = cmd->add_option("--preprocess-layers", mo->preprocess_layers,
                                          "Dense layers before the implicit layer");
    CLI::Option* hidden = cmd->add_option("--hidden", mo->hidden, "Hidden dimension");
    CLI::Option* mu = cmd->add_option("--mu", mo->mu, "Constraint strength mu");
    CLI::Option* tol = cmd->add_option("--tol", mo->tol, "Solver threshold");
    CLI::Option* max_iter = cmd->add_option("--max-iter", mo->max_iter, "Solver iteration cap");
    CLI::Option* dropout = cmd->add_option("--dropout", mo->dropout, "Dropout rate");
    CLI::Option* geo = cmd->add_option("--geometry-hidden", mo->geometry_hidden,
                                       "Geometry embedding dimension");
    CLI::Option* eps = cmd->add_option("--epsilon", mo->epsilon, "Geometry epsilon");
    CLI::Option* nobn =
        cmd->add_flag("--no-batch-norm", mo->no_batch_norm, "Disable batch normalization");
    binder->bind(kind, "kind", [mo](const json& v) { mo->kind = v.get<std::string>(); });
    binder->bind(pre, "preprocess", [mo](const json& v) { mo->preprocess = v.get<std::string>(); });
    binder->bind(layers, "preprocess_layers",
                 [mo](const json& v) { mo->preprocess_layers = v.get<int>(); });
    binder->bind(hidden, "hidden", [mo](const json& v) { mo->hidden = v.get<int>(); });
    binder->bind(mu, "mu", [mo](const json& v) { mo->mu = v.get<double>(); });
    binder->bind(tol, "tol", [mo](const json& v) { mo->tol = v.get<double>(); });
    binder->bind(max_iter, "max_iter", [mo](const json& v) { mo->max_iter = v.get<int>(); });
    binder->bind(dropout, "dropout", [mo](const json& v) { mo->dropout = v.get<double>(); });
    binder->bind(geo, "geometry_hidden",
                 [mo](const json& v) { mo->geometry_hidden = v.get<int>(); });
    binder->bind(eps, "epsilon", [mo](const json& v) { mo->epsilon = v.get<double>(); });
    binder->bind(nobn, "no_batch_norm", [mo](const json& v) { mo->no_batch_norm = v.get<bool>(); });
}

dignn::ModelConfig to_model_config(const ModelOpts& mo) {
    dignn::ModelConfig cfg;
    cfg.kind = dignn::laplacian_kind_from_string(mo.kind);
    cfg.preprocess_mode = dignn::preprocess_mode_from_string(mo.preprocess);
    cfg.preprocess_layers = mo.preprocess_layers;
    cfg.hidden_dim = mo.hidden;
    cfg.mu = mo.mu;
    cfg.solver_tol = mo.tol;
    cfg.solver_max_iter = mo.max_iter;
    cfg.dropout = mo.dropout;
    cfg.geometry_hidden = mo.geometry_hidden;
    cfg.epsilon = mo.epsilon;
    cfg.batch_norm = !mo.no_batch_norm;
    return cfg;
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

struct SpectrumOpts {
    CommonOpts common;
    std::string graph_path;
    std::string kind = "rw";
    double mu = 2.5;
    std::string features_path;
    int geometry_hidden = 16;
    double epsilon = 1e-6;
};

int run_spectrum(const SpectrumOpts& o) {
    finish_common(o.common);
    const dignn::Graph g = dignn::load_edge_list(o.graph_path);
    if (!dignn::is_connected(g)) {
        std::cerr << "warning: graph is disconnected; the estimate may miss components\n";
    }
    const dignn::LaplacianKind kind = dignn::laplacian_kind_from_string(o.kind);
    dignn::LaplacianOperator op;
    std::optional<dignn::GeometryParams> geo;
    dignn::Matrix x;
    if (kind == dignn::LaplacianKind::Parameterized) {
        x = o.features_path.empty() ? seeded_features(g.num_nodes(), 8, o.common.seed)
                                    : dignn::detail::read_csv_matrix(o.features_path);
        geo = seeded_geometry(static_cast<int>(x.cols()), o.geometry_hidden, o.epsilon,
                              o.common.seed);
        op = dignn::build_parameterized(g, x, *geo);
    } else {
        op = dignn::build_canonical(g, kind);
    }
    const dignn::WellPosednessReport rep = dignn::certify(op, o.mu, geo ? &*geo : nullptr);
    json doc = dignn::to_json(rep);
    doc["kind"] = dignn::to_string(kind);
    doc["num_nodes"] = g.num_nodes();
    if (op.param_cache()) doc["zero_phi_arcs"] = op.param_cache()->zero_phi_arcs;
    write_json(out_path(o.common, "wellposedness.json"), doc);
    std::cout << doc.dump(2) << '\n';
    return rep.well_posed ? kExitOk : kExitDomain;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

struct SolveOpts {
    CommonOpts common;
    std::string graph_path;
    std::string features_path;
    std::string kind = "rw";
    double mu = 2.5;
    double tol = 1e-6;
    int max_iter = 100;
    bool direct = false;
    int geometry_hidden = 16;
    double epsilon = 1e-6;
};

int run_solve(const SolveOpts& o) {
    finish_common(o.common);
    const dignn::Graph g = dignn::load_edge_list(o.graph_path);
    const dignn::Matrix x = o.features_path.empty()
                                ? seeded_features(g.num_nodes(), 4, o.common.seed)
                                : dignn::detail::read_csv_matrix(o.features_path);
    const dignn::LaplacianKind kind = dignn::laplacian_kind_from_string(o.kind);
    dignn::LaplacianOperator op;
    std::optional<dignn::GeometryParams> geo;
    if (kind == dignn::LaplacianKind::Parameterized) {
        geo = seeded_geometry(static_cast<int>(x.cols()), o.geometry_hidden, o.epsilon,
                              o.common.seed);
        op = dignn::build_parameterized(g, x, *geo);
    } else {
        op = dignn::build_canonical(g, kind);
    }
    const dignn::WellPosednessReport cert = dignn::certify(op, o.mu, geo ? &*geo : nullptr);
    if (!cert.well_posed) {
        std::cerr << "warning: mu = " << o.mu
                  << " does not exceed the estimated lambda_max = " << cert.lambda_max_estimate
                  << "; the iteration may not converge\n";
    }

    json doc;
    doc["mu"] = o.mu;
    doc["kind"] = dignn::to_string(kind);
    int exit_code = kExitOk;
    if (o.direct) {
        const dignn::Matrix z = dignn::solve_direct(op, x, o.mu);
        doc["method"] = "direct";
        doc["z_star"] = dignn::matrix_to_json(z);
        doc["converged"] = true;
    } else {
        doc["method"] = "fixed_point";
        try {
            const dignn::EquilibriumResult res =
                dignn::solve_implicit_layer(op, x, o.mu, o.tol, o.max_iter);
            doc.update(dignn::to_json(res, out_path(o.common, "z_star.csv")));
            if (doc.contains("z_star_csv")) {
                std::ofstream csv(doc["z_star_csv"].get<std::string>());
                dignn::write_csv_matrix(res.z_star, csv);
            }
            std::string csv = "iteration,residual\n";
            for (std::size_t t = 0; t < res.residual_history.size(); ++t) {
                csv += std::to_string(t + 1) + "," +
                       dignn::format_double(res.residual_history[t]) + "\n";
            }
            write_text(out_path(o.common, "residuals.csv"), csv);
            if (!res.converged) exit_code = kExitDomain;
        } catch (const dignn::NumericError& e) {
            doc["converged"] = false;
            doc["error"] = e.what();
            exit_code = kExitDomain;
        }
    }
    write_json(out_path(o.common, "equilibrium.json"), doc);
    std::cout << "converged: " << (doc.value("converged", false) ? "true" : "false") << '\n';
    return exit_code;
}

// ---------------------------------------------------------------------------
// demo-ost / demo-osi
// ---------------------------------------------------------------------------

struct OstOpts {
    CommonOpts common;
    std::string graph_path;
    std::string kind = "rw";
    double mu = 2.5;
    double tol = 1e-6;
    int max_iter = 5000;
    double constrained_frac = 0.3;
    int feature_dim = 4;
    std::string features_a, features_b;
    int geometry_hidden = 16;
    double epsilon = 1e-6;
};

int run_demo_ost(const OstOpts& o) {
    finish_common(o.common);
    const dignn::Graph g = dignn::load_edge_list(o.graph_path);
    const int n = g.num_nodes();
    const dignn::Matrix xa = o.features_a.empty()
                                 ? seeded_features(n, o.feature_dim, o.common.seed)
                                 : dignn::detail::read_csv_matrix(o.features_a);
    const dignn::Matrix xb = o.features_b.empty()
                                 ? seeded_features(n, o.feature_dim, o.common.seed + 1)
                                 : dignn::detail::read_csv_matrix(o.features_b);
    // Seeded constrained subset with seeded targets, fixed across both solves.
    dignn::Rng rng(o.common.seed + 2);
    std::vector<int> nodes;
    for (int i = 0; i < n; ++i) {
        if (rng.uniform() < o.constrained_frac) nodes.push_back(i);
    }
    if (nodes.empty()) nodes.push_back(0);
    dignn::Matrix targets(static_cast<int>(nodes.size()), xa.cols());
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
        for (Eigen::Index j = 0; j < targets.cols(); ++j) targets(i, j) = rng.normal();
    }
    const dignn::ConstraintSet cs = dignn::make_constraint_set(n, nodes, targets);

    const dignn::LaplacianKind kind = dignn::laplacian_kind_from_string(o.kind);
    dignn::OstReport rep;
    double gamma_estimate = 0.0;
    if (kind == dignn::LaplacianKind::Parameterized) {
        const dignn::GeometryParams geo = seeded_geometry(
            static_cast<int>(xa.cols()), o.geometry_hidden, o.epsilon, o.common.seed);
        const dignn::LaplacianOperator op = dignn::build_parameterized(g, xa, geo);
        gamma_estimate = dignn::estimate_gamma_max(
            dignn::build_constrained_system(op, dignn::build_markov(op), cs, o.mu));
        rep = dignn::check_ost_parameterized(g, geo, cs, xa, xb, o.mu, o.tol, o.max_iter);
    } else {
        const dignn::LaplacianOperator op = dignn::build_canonical(g, kind);
        gamma_estimate = dignn::estimate_gamma_max(
            dignn::build_constrained_system(op, dignn::build_markov(op), cs, o.mu));
        rep = dignn::check_ost(g, kind, cs, xa, xb, o.mu, o.tol, o.max_iter);
    }
    if (gamma_estimate >= 1.0) {
        std::cerr << "warning: estimated largest singular value of the fixed-point operator is "
                  << gamma_estimate << " >= 1; the uniqueness guarantee does not apply\n";
    }
    json doc = dignn::to_json(rep);
    doc["gamma_max_estimate"] = gamma_estimate;
    doc["kind"] = dignn::to_string(kind);
    doc["constrained_nodes"] = nodes;
    write_json(out_path(o.common, "ost_report.json"), doc);
    std::cout << "feature_independent: " << (rep.feature_independent ? "true" : "false")
              << "  max_abs_difference: " << dignn::format_double(rep.max_abs_difference) << '\n';
    return (rep.converged_a && rep.converged_b) ? kExitOk : kExitDomain;
}

struct OsiOpts {
    CommonOpts common;
    std::string graph_path;
    std::string features_path;
    int feature_dim = 1;
    double tol = 1e-10;
    int max_iter = 100000;
};

int run_demo_osi(const OsiOpts& o) {
    finish_common(o.common);
    const dignn::Graph g = dignn::load_edge_list(o.graph_path);
    const dignn::Matrix f0 = o.features_path.empty()
                                 ? seeded_features(g.num_nodes(), o.feature_dim, o.common.seed)
                                 : dignn::detail::read_csv_matrix(o.features_path);
    const dignn::LaplacianOperator op =
        dignn::build_canonical(g, dignn::LaplacianKind::Unnormalized);
    const dignn::MarkovMatrix mm = dignn::build_markov(op);
    const dignn::OsiReport rep = dignn::check_osi(mm, f0, o.tol, o.max_iter);
    write_json(out_path(o.common, "osi_report.json"), dignn::to_json(rep));
    std::cout << "rows_identical: " << (rep.rows_identical ? "true" : "false")
              << "  max_row_deviation: " << dignn::format_double(rep.max_row_deviation) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradCheckOpts {
    CommonOpts common;
    DatasetOpts dataset;
    ModelOpts model;
    double step = 1e-5;
    double threshold = 1e-4;
};

int run_gradcheck(GradCheckOpts& o) {
    finish_common(o.common);
    // Default fixture: a small, well-connected SBM instance and a tightly
    // solved model (the wide train defaults would leave 20 nodes sparse).
    if (!o.dataset.synth && o.dataset.edges.empty()) {
        o.dataset.synth = true;
        o.dataset.n = std::min(o.dataset.n, 20);
        o.dataset.feature_dim = std::min(o.dataset.feature_dim, 4);
        o.dataset.p_in = std::max(o.dataset.p_in, 0.4);
        o.dataset.p_out = std::max(o.dataset.p_out, 0.1);
        o.model.hidden = std::min(o.model.hidden, 8);
        o.model.geometry_hidden = std::min(o.model.geometry_hidden, 4);
    }
    const dignn::Dataset ds = resolve_dataset(o.dataset, o.common.seed);
    dignn::ModelConfig mc = to_model_config(o.model);
    mc.solver_tol = 1e-12;
    mc.solver_max_iter = 5000;
    dignn::Rng init(o.common.seed);
    const dignn::DignnModel model =
        dignn::make_model(static_cast<int>(ds.features.cols()), ds.num_classes, mc, init);
    const dignn::GradCheckReport rep =
        dignn::grad_check(model, ds.graph, ds.features, ds.labels, ds.train_mask, o.step);
    json doc = dignn::to_json(rep);
    doc["threshold"] = o.threshold;
    doc["passed"] = rep.all_below(o.threshold);
    write_json(out_path(o.common, "gradcheck.json"), doc);
    std::cout << doc.dump(2) << '\n';
    return rep.all_below(o.threshold) ? kExitOk : kExitDomain;
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

struct TrainOpts {
    CommonOpts common;
    DatasetOpts dataset;
    ModelOpts model;
    double lr = 0.001;
    double weight_decay = 0.0;
    int epochs = 200;
};

int run_train(const TrainOpts& o) {
    finish_common(o.common);
    const dignn::Dataset ds = resolve_dataset(o.dataset, o.common.seed);
    const dignn::ModelConfig mc = to_model_config(o.model);
    dignn::Rng init(o.common.seed);
    dignn::DignnModel model =
        dignn::make_model(static_cast<int>(ds.features.cols()), ds.num_classes, mc, init);
    dignn::TrainConfig tc;
    tc.learning_rate = o.lr;
    tc.weight_decay = o.weight_decay;
    tc.epochs = o.epochs;
    tc.seed = o.common.seed;
    const dignn::TrainReport rep = dignn::train(model, ds, tc);

    std::string lines;
    for (const dignn::EpochMetrics& em : rep.epochs) {
        lines += json{{"epoch", em.epoch},
                      {"train_loss", em.train_loss},
                      {"train_acc", em.train_acc},
                      {"val_acc", em.val_acc}}
                     .dump() +
                 "\n";
    }
    write_text(out_path(o.common, "metrics.jsonl"), lines);
    dignn::save_checkpoint(model, out_path(o.common, "checkpoint.json"),
                           dignn::Rng(o.common.seed).serialize_state());

    json doc = dignn::to_json(rep);
    doc["test_acc"] = dignn::evaluate(model, ds, "test");
    if (model.laplacian_kind == dignn::LaplacianKind::Parameterized) {
        dignn::DignnModel probe = model;
        const dignn::ForwardCache cache = dignn::forward(probe, ds.graph, ds.features);
        doc["bounds"] = dignn::to_json(dignn::monitor_bounds(model, cache.x_tilde));
        doc["zero_phi_arcs"] = cache.op.param_cache()->zero_phi_arcs;
        std::ofstream csv(out_path(o.common, "coefficients.csv"));
        dignn::write_coefficients_csv(cache.op, csv);
    }
    write_json(out_path(o.common, "train_report.json"), doc);
    std::cout << "best_val_acc: " << rep.best_val_acc << "  test_acc: " << doc["test_acc"]
              << '\n';
    return kExitOk;
}

struct EvalOpts {
    CommonOpts common;
    DatasetOpts dataset;
    std::string checkpoint;
    std::string split = "test";
};

int run_eval(const EvalOpts& o) {
    finish_common(o.common);
    dignn::DignnModel model = dignn::load_checkpoint(o.checkpoint);
    const dignn::Dataset ds = resolve_dataset(o.dataset, o.common.seed);
    const double acc = dignn::evaluate(model, ds, o.split);
    const json doc{{"split", o.split}, {"accuracy", acc}, {"examples", ds.num_examples()}};
    write_json(out_path(o.common, "eval.json"), doc);
    std::cout << doc.dump(2) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataOpts {
    CommonOpts common;
    DatasetOpts dataset;
};

int run_gen_data(GenDataOpts& o) {
    finish_common(o.common);
    o.dataset.synth = true;
    const dignn::Dataset ds = resolve_dataset(o.dataset, o.common.seed);
    dignn::save_dataset(ds, out_path(o.common, "edges.txt"), out_path(o.common, "features.csv"),
                        out_path(o.common, "labels.csv"), out_path(o.common, "splits.json"));
    std::cout << "nodes: " << ds.graph.num_nodes() << "  edges: " << ds.graph.num_arcs() / 2
              << "  classes: " << ds.num_classes << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph neural diffusion toolkit: parameterized Laplacians, constrained "
                 "Dirichlet equilibria, over-smoothing diagnostics, implicit-depth training"};
    app.require_subcommand(1);

    SpectrumOpts spectrum;
    ConfigBinder spectrum_binder;
    CLI::App* c_spectrum =
        app.add_subcommand("spectrum", "Certify well-posedness of mu for a graph");
    add_common(c_spectrum, &spectrum.common, &spectrum_binder);
    spectrum_binder.bind(c_spectrum->add_option("--graph", spectrum.graph_path, "Edge list path"),
                         "graph",
                         [&](const json& v) { spectrum.graph_path = v.get<std::string>(); });
    spectrum_binder.bind(c_spectrum->add_option("--kind", spectrum.kind, "un|rw|n|param"), "kind",
                         [&](const json& v) { spectrum.kind = v.get<std::string>(); });
    spectrum_binder.bind(c_spectrum->add_option("--mu", spectrum.mu, "Constraint strength"), "mu",
                         [&](const json& v) { spectrum.mu = v.get<double>(); });
    spectrum_binder.bind(
        c_spectrum->add_option("--features", spectrum.features_path, "Feature CSV (param kind)"),
        "features", [&](const json& v) { spectrum.features_path = v.get<std::string>(); });
    spectrum_binder.bind(c_spectrum->add_option("--geometry-hidden", spectrum.geometry_hidden,
                                                "Geometry embedding dimension"),
                         "geometry_hidden",
                         [&](const json& v) { spectrum.geometry_hidden = v.get<int>(); });
    spectrum_binder.bind(c_spectrum->add_option("--epsilon", spectrum.epsilon, "Geometry epsilon"),
                         "epsilon", [&](const json& v) { spectrum.epsilon = v.get<double>(); });

    SolveOpts solve;
    ConfigBinder solve_binder;
    CLI::App* c_solve = app.add_subcommand("solve", "Solve the implicit diffusion equilibrium");
    add_common(c_solve, &solve.common, &solve_binder);
    solve_binder.bind(c_solve->add_option("--graph", solve.graph_path, "Edge list path"), "graph",
                      [&](const json& v) { solve.graph_path = v.get<std::string>(); });
    solve_binder.bind(c_solve->add_option("--features", solve.features_path, "Source term CSV"),
                      "features", [&](const json& v) { solve.features_path = v.get<std::string>(); });
    solve_binder.bind(c_solve->add_option("--kind", solve.kind, "un|rw|n|param"), "kind",
                      [&](const json& v) { solve.kind = v.get<std::string>(); });
    solve_binder.bind(c_solve->add_option("--mu", solve.mu, "Constraint strength"), "mu",
                      [&](const json& v) { solve.mu = v.get<double>(); });
    solve_binder.bind(c_solve->add_option("--tol", solve.tol, "Residual threshold"), "tol",
                      [&](const json& v) { solve.tol = v.get<double>(); });
    solve_binder.bind(c_solve->add_option("--max-iter", solve.max_iter, "Iteration cap"),
                      "max_iter", [&](const json& v) { solve.max_iter = v.get<int>(); });
    solve_binder.bind(c_solve->add_flag("--direct", solve.direct, "Dense LU instead of iteration"),
                      "direct", [&](const json& v) { solve.direct = v.get<bool>(); });
    solve_binder.bind(c_solve->add_option("--geometry-hidden", solve.geometry_hidden,
                                          "Geometry embedding dimension"),
                      "geometry_hidden",
                      [&](const json& v) { solve.geometry_hidden = v.get<int>(); });
    solve_binder.bind(c_solve->add_option("--epsilon", solve.epsilon, "Geometry epsilon"),
                      "epsilon", [&](const json& v) { solve.epsilon = v.get<double>(); });

    OstOpts ost;
    ConfigBinder ost_binder;
    CLI::App* c_ost =
        app.add_subcommand("demo-ost", "Compare constrained equilibria across feature changes");
    add_common(c_ost, &ost.common, &ost_binder);
    ost_binder.bind(c_ost->add_option("--graph", ost.graph_path, "Edge list path"), "graph",
                    [&](const json& v) { ost.graph_path = v.get<std::string>(); });
    ost_binder.bind(c_ost->add_option("--kind", ost.kind, "un|rw|n|param"), "kind",
                    [&](const json& v) { ost.kind = v.get<std::string>(); });
    ost_binder.bind(c_ost->add_option("--mu", ost.mu, "Constraint strength"), "mu",
                    [&](const json& v) { ost.mu = v.get<double>(); });
    ost_binder.bind(c_ost->add_option("--tol", ost.tol, "Independence threshold"), "tol",
                    [&](const json& v) { ost.tol = v.get<double>(); });
    ost_binder.bind(c_ost->add_option("--max-iter", ost.max_iter, "Iteration cap"), "max_iter",
                    [&](const json& v) { ost.max_iter = v.get<int>(); });
    ost_binder.bind(c_ost->add_option("--constrained-frac", ost.constrained_frac,
                                      "Fraction of nodes to constrain"),
                    "constrained_frac",
                    [&](const json& v) { ost.constrained_frac = v.get<double>(); });
    ost_binder.bind(c_ost->add_option("--feature-dim", ost.feature_dim, "Random feature width"),
                    "feature_dim", [&](const json& v) { ost.feature_dim = v.get<int>(); });
    ost_binder.bind(c_ost->add_option("--features-a", ost.features_a, "First feature CSV"),
                    "features_a", [&](const json& v) { ost.features_a = v.get<std::string>(); });
    ost_binder.bind(c_ost->add_option("--features-b", ost.features_b, "Second feature CSV"),
                    "features_b", [&](const json& v) { ost.features_b = v.get<std::string>(); });
    ost_binder.bind(c_ost->add_option("--geometry-hidden", ost.geometry_hidden,
                                      "Geometry embedding dimension"),
                    "geometry_hidden", [&](const json& v) { ost.geometry_hidden = v.get<int>(); });
    ost_binder.bind(c_ost->add_option("--epsilon", ost.epsilon, "Geometry epsilon"), "epsilon",
                    [&](const json& v) { ost.epsilon = v.get<double>(); });

    OsiOpts osi;
    ConfigBinder osi_binder;
    CLI::App* c_osi =
        app.add_subcommand("demo-osi", "Drive unconstrained diffusion to its constant limit");
    add_common(c_osi, &osi.common, &osi_binder);
    osi_binder.bind(c_osi->add_option("--graph", osi.graph_path, "Edge list path"), "graph",
                    [&](const json& v) { osi.graph_path = v.get<std::string>(); });
    osi_binder.bind(c_osi->add_option("--features", osi.features_path, "Initial state CSV"),
                    "features", [&](const json& v) { osi.features_path = v.get<std::string>(); });
    osi_binder.bind(c_osi->add_option("--feature-dim", osi.feature_dim, "Random initial width"),
                    "feature_dim", [&](const json& v) { osi.feature_dim = v.get<int>(); });
    osi_binder.bind(c_osi->add_option("--tol", osi.tol, "Iteration residual threshold"), "tol",
                    [&](const json& v) { osi.tol = v.get<double>(); });
    osi_binder.bind(c_osi->add_option("--max-iter", osi.max_iter, "Iteration cap"), "max_iter",
                    [&](const json& v) { osi.max_iter = v.get<int>(); });

    GradCheckOpts gradcheck;
    ConfigBinder gradcheck_binder;
    CLI::App* c_gradcheck =
        app.add_subcommand("gradcheck", "Finite-difference audit of the implicit gradients");
    add_common(c_gradcheck, &gradcheck.common, &gradcheck_binder);
    add_dataset_opts(c_gradcheck, &gradcheck.dataset, &gradcheck_binder);
    add_model_opts(c_gradcheck, &gradcheck.model, &gradcheck_binder);
    gradcheck_binder.bind(c_gradcheck->add_option("--step", gradcheck.step, "Difference step"),
                          "step", [&](const json& v) { gradcheck.step = v.get<double>(); });
    gradcheck_binder.bind(
        c_gradcheck->add_option("--threshold", gradcheck.threshold, "Max relative error to pass"),
        "threshold", [&](const json& v) { gradcheck.threshold = v.get<double>(); });

    TrainOpts train_opts;
    ConfigBinder train_binder;
    CLI::App* c_train =
        app.add_subcommand("train", "Train a model and write metrics + checkpoint");
    add_common(c_train, &train_opts.common, &train_binder);
    add_dataset_opts(c_train, &train_opts.dataset, &train_binder);
    add_model_opts(c_train, &train_opts.model, &train_binder);
    train_binder.bind(c_train->add_option("--lr", train_opts.lr, "Learning rate"), "lr",
                      [&](const json& v) { train_opts.lr = v.get<double>(); });
    train_binder.bind(
        c_train->add_option("--weight-decay", train_opts.weight_decay, "Decoupled weight decay"),
        "weight_decay", [&](const json& v) { train_opts.weight_decay = v.get<double>(); });
    train_binder.bind(c_train->add_option("--epochs", train_opts.epochs, "Training epochs"),
                      "epochs", [&](const json& v) { train_opts.epochs = v.get<int>(); });

    EvalOpts eval_opts;
    ConfigBinder eval_binder;
    CLI::App* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    add_common(c_eval, &eval_opts.common, &eval_binder);
    add_dataset_opts(c_eval, &eval_opts.dataset, &eval_binder);
    eval_binder.bind(c_eval->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint path"),
                     "checkpoint",
                     [&](const json& v) { eval_opts.checkpoint = v.get<std::string>(); });
    eval_binder.bind(c_eval->add_option("--split", eval_opts.split, "train|val|test"), "split",
                     [&](const json& v) { eval_opts.split = v.get<std::string>(); });

    GenDataOpts gen;
    ConfigBinder gen_binder;
    CLI::App* c_gen = app.add_subcommand("gen-data", "Write a synthetic SBM dataset to disk");
    add_common(c_gen, &gen.common, &gen_binder);
    add_dataset_opts(c_gen, &gen.dataset, &gen_binder);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (c_spectrum->parsed()) {
            if (!spectrum.common.config_path.empty())
                spectrum_binder.apply_file(spectrum.common.config_path);
            return run_spectrum(spectrum);
        }
        if (c_solve->parsed()) {
            if (!solve.common.config_path.empty()) solve_binder.apply_file(solve.common.config_path);
            return run_solve(solve);
        }
        if (c_ost->parsed()) {
            if (!ost.common.config_path.empty()) ost_binder.apply_file(ost.common.config_path);
            return run_demo_ost(ost);
        }
        if (c_osi->parsed()) {
            if (!osi.common.config_path.empty()) osi_binder.apply_file(osi.common.config_path);
            return run_demo_osi(osi);
        }
        if (c_gradcheck->parsed()) {
            if (!gradcheck.common.config_path.empty())
                gradcheck_binder.apply_file(gradcheck.common.config_path);
            return run_gradcheck(gradcheck);
        }
        if (c_train->parsed()) {
            if (!train_opts.common.config_path.empty())
                train_binder.apply_file(train_opts.common.config_path);
            return run_train(train_opts);
        }
        if (c_eval->parsed()) {
            if (!eval_opts.common.config_path.empty())
                eval_binder.apply_file(eval_opts.common.config_path);
            return run_eval(eval_opts);
        }
        if (c_gen->parsed()) {
            if (!gen.common.config_path.empty()) gen_binder.apply_file(gen.common.config_path);
            return run_gen_data(gen);
        }
    } catch (const dignn::DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDomain;
    } catch (const dignn::NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDomain;
    } catch (const dignn::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
