#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dignn/data.hpp"
#include "dignn/model.hpp"
#include "dignn/nn.hpp"
#include "dignn/rng.hpp"

namespace dignn {

/// Architecture knobs for building a fresh model.
struct ModelConfig {
    LaplacianKind kind = LaplacianKind::RandomWalk;
    PreprocessMode preprocess_mode = PreprocessMode::Mlp;
    int preprocess_layers = 1;
    int hidden_dim = 64;
    Activation hidden_activation = Activation::Relu;
    bool batch_norm = true;
    double mu = 2.5;
    double solver_tol = 1e-6;
    int solver_max_iter = 10;
    double dropout = 0.0;
    int geometry_hidden = 16;
    double epsilon = 1e-6;
    Readout readout = Readout::None;
};

inline DenseLayer init_dense(Rng& rng, int out_dim, int in_dim, Activation act) {
    DenseLayer layer;
    layer.weights.resize(out_dim, in_dim);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (int i = 0; i < out_dim; ++i) {
        for (int j = 0; j < in_dim; ++j) layer.weights(i, j) = rng.uniform(-bound, bound);
    }
    layer.bias = Vector::Zero(out_dim);
    layer.activation = act;
    return layer;
}

inline Matrix init_uniform_matrix(Rng& rng, int rows, int cols) {
    Matrix m(rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    }
    return m;
}

/// Builds a model with seeded fan-in-scaled uniform initialization. The
/// implicit-layer width is hidden_dim for MLP preprocessing and the raw
/// feature width when preprocessing is A*X.
inline DignnModel make_model(int in_dim, int num_classes, const ModelConfig& cfg, Rng& rng) {
    DignnModel model;
    model.preprocess_mode = cfg.preprocess_mode;
    model.laplacian_kind = cfg.kind;
    model.mu = cfg.mu;
    model.solver_tol = cfg.solver_tol;
    model.solver_max_iter = cfg.solver_max_iter;
    model.dropout_rate = cfg.dropout;
    model.readout = cfg.readout;

    int width = in_dim;
    if (cfg.preprocess_mode == PreprocessMode::Mlp) {
        if (cfg.preprocess_layers < 1) {
            throw InvalidArgument("make_model: at least one preprocess layer required in mlp mode");
        }
        for (int l = 0; l < cfg.preprocess_layers; ++l) {
            model.preprocess.push_back(
                init_dense(rng, cfg.hidden_dim, width, cfg.hidden_activation));
            width = cfg.hidden_dim;
        }
    }
    model.norm_enabled = cfg.batch_norm;
    model.norm = make_batch_norm(width);

    if (cfg.kind == LaplacianKind::Parameterized) {
        GeometryParams geo;
        geo.theta_chi = init_uniform_matrix(rng, cfg.geometry_hidden, width);
        geo.theta_phi = init_uniform_matrix(rng, cfg.geometry_hidden, cfg.geometry_hidden);
        geo.theta_varphi = init_uniform_matrix(rng, cfg.geometry_hidden, width);
        geo.epsilon = cfg.epsilon;
        model.geometry = std::move(geo);
    }
    model.output.push_back(init_dense(rng, num_classes, width, Activation::Identity));
    return model;
}

struct TrainConfig {
    double learning_rate = 0.001;
    double weight_decay = 0.0;
    int epochs = 200;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

struct TrainReport {
    std::vector<EpochMetrics> epochs;
    int best_epoch = -1;
    double best_val_acc = 0.0;
};

inline const std::vector<std::uint8_t>& pick_mask(const Dataset& ds, const std::string& name) {
    if (name == "train") return ds.train_mask;
    if (name == "val") return ds.val_mask;
    if (name == "test") return ds.test_mask;
    throw InvalidArgument("unknown split: " + name);
}

/// Evaluation-mode accuracy on a split.
inline double evaluate(DignnModel& model, const Dataset& ds, const std::string& split_name) {
    const std::vector<std::uint8_t>& mask = pick_mask(ds, split_name);
    const std::vector<int>* segs = ds.graph_level() ? &ds.graph_offsets : nullptr;
    const ForwardCache cache = forward(model, ds.graph, ds.features, /*training=*/false,
                                       nullptr, segs);
    return accuracy(cache.logits, ds.labels, mask);
}

/// Deterministic full-batch training loop: forward, loss on the train
/// mask, implicit backward, Adam step. Tracks validation accuracy per
/// epoch and restores the best-validation parameters at the end.
inline TrainReport train(DignnModel& model, const Dataset& ds, const TrainConfig& cfg) {
    validate_dataset(ds);
    if (cfg.epochs < 0) throw InvalidArgument("train: epochs must be non-negative");
    Rng rng(cfg.seed);
    AdamOptimizer opt(cfg.learning_rate, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.adam_eps);
    const std::vector<int>* segs = ds.graph_level() ? &ds.graph_offsets : nullptr;

    TrainReport report;
    DignnModel best = model;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        ForwardCache cache = forward(model, ds.graph, ds.features, /*training=*/true, &rng, segs);
        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = loss_cross_entropy(cache.logits, ds.labels, ds.train_mask);
        em.train_acc = accuracy(cache.logits, ds.labels, ds.train_mask);

        Gradients grads = backward(model, cache, ds.labels, ds.train_mask);
        std::vector<ParamGradView> views = parameter_views(model, grads);
        opt.step(views);

        em.val_acc = evaluate(model, ds, "val");
        if (report.best_epoch < 0 || em.val_acc > report.best_val_acc) {
            report.best_val_acc = em.val_acc;
            report.best_epoch = epoch;
            best = model;
        }
        report.epochs.push_back(em);
    }
    if (report.best_epoch >= 0) model = best;
    return report;
}

}  // namespace dignn
