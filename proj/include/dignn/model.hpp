#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dignn/equilibrium.hpp"
#include "dignn/errors.hpp"
#include "dignn/graph.hpp"
#include "dignn/laplacian.hpp"
#include "dignn/nn.hpp"
#include "dignn/rng.hpp"
#include "dignn/spectral.hpp"
#include "dignn/types.hpp"

namespace dignn {

enum class PreprocessMode { Mlp, AdjacencyTimesFeatures };
enum class Readout { None, Mean };

inline std::string to_string(PreprocessMode m) {
    return m == PreprocessMode::Mlp ? "mlp" : "adjacency_times_features";
}

inline PreprocessMode preprocess_mode_from_string(const std::string& s) {
    if (s == "mlp") return PreprocessMode::Mlp;
    if (s == "adjacency_times_features" || s == "ax") return PreprocessMode::AdjacencyTimesFeatures;
    throw InvalidArgument("unknown preprocess mode: " + s);
}

/// The model: feature preprocessing, an implicit diffusion layer whose
/// output is the equilibrium of z = x_tilde - (1/mu) L z, and an output
/// stack. The random-walk variant uses the fixed canonical operator; the
/// parameterized variant rebuilds its geometry from the (normalized)
/// embeddings on every forward pass. Dropout is applied after each hidden
/// layer and after the implicit layer, training mode only; it never enters
/// the fixed-point iteration itself.
struct DignnModel {
    PreprocessMode preprocess_mode = PreprocessMode::Mlp;
    std::vector<DenseLayer> preprocess;
    bool norm_enabled = true;
    BatchNorm norm;
    LaplacianKind laplacian_kind = LaplacianKind::RandomWalk;
    std::optional<GeometryParams> geometry;
    double mu = 2.5;
    double solver_tol = 1e-6;
    int solver_max_iter = 10;
    std::vector<DenseLayer> output;
    Readout readout = Readout::None;
    double dropout_rate = 0.0;
};

inline void validate_model(const DignnModel& model) {
    if (model.laplacian_kind != LaplacianKind::RandomWalk &&
        model.laplacian_kind != LaplacianKind::Parameterized) {
        throw InvalidArgument("model: laplacian kind must be random_walk or parameterized");
    }
    if ((model.laplacian_kind == LaplacianKind::Parameterized) != model.geometry.has_value()) {
        throw InvalidArgument("model: geometry parameters must be present exactly for the parameterized kind");
    }
    if (!(model.mu > 0.0)) throw InvalidArgument("model: mu must be positive");
    if (model.preprocess_mode == PreprocessMode::Mlp && model.preprocess.empty()) {
        throw InvalidArgument("model: mlp preprocessing needs at least one layer");
    }
    if (model.output.empty()) throw InvalidArgument("model: output stack must not be empty");
}

struct ForwardCache {
    const Graph* graph = nullptr;
    bool training = false;
    Matrix x;
    std::vector<Matrix> pre_inputs;
    std::vector<Matrix> pre_preacts;
    std::vector<Matrix> pre_dropout_masks;
    Matrix x_tilde_raw;
    BatchNormCache bn;
    Matrix x_tilde;
    LaplacianOperator op;
    EquilibriumResult eq;
    Matrix z_dropout_mask;
    std::vector<Matrix> out_inputs;
    std::vector<Matrix> out_preacts;
    std::vector<Matrix> out_dropout_masks;
    Matrix node_logits;
    std::vector<int> segments;  // mean-readout boundaries (size G+1); empty for node tasks
    Matrix logits;
};

/// Forward pass. `segments`, when given with Readout::Mean, lists G+1 node
/// offsets of a block-diagonal multi-graph batch; logits then have one row
/// per segment. `dropout_rng` must be supplied when training with a
/// positive dropout rate. The model is non-const because training mode
/// folds batch statistics into the norm's running averages.
inline ForwardCache forward(DignnModel& model, const Graph& g, const Matrix& X,
                            bool training = false, Rng* dropout_rng = nullptr,
                            const std::vector<int>* segments = nullptr) {
    validate_model(model);
    if (X.rows() != g.num_nodes()) throw ShapeError("forward: one feature row per node required");
    const bool use_dropout = training && model.dropout_rate > 0.0;
    if (use_dropout && dropout_rng == nullptr) {
        throw InvalidArgument("forward: training with dropout needs an rng");
    }

    ForwardCache cache;
    cache.graph = &g;
    cache.training = training;
    cache.x = X;

    Matrix h = X;
    if (model.preprocess_mode == PreprocessMode::Mlp) {
        for (const DenseLayer& layer : model.preprocess) {
            cache.pre_inputs.push_back(h);
            Matrix preact;
            h = dense_forward(layer, h, &preact);
            cache.pre_preacts.push_back(std::move(preact));
            if (use_dropout) {
                Matrix mask = dropout_mask(*dropout_rng, h.rows(), h.cols(), model.dropout_rate);
                h.array() *= mask.array();
                cache.pre_dropout_masks.push_back(std::move(mask));
            }
        }
    } else {
        // h(A, X) = A X: weighted adjacency times features, no parameters.
        Matrix ax = Matrix::Zero(g.num_nodes(), X.cols());
        for (int a = 0; a < g.num_arcs(); ++a) {
            ax.row(g.arc_sources()[static_cast<std::size_t>(a)]) +=
                g.edge_weights()[static_cast<std::size_t>(a)] *
                X.row(g.neighbor_ids()[static_cast<std::size_t>(a)]);
        }
        h = std::move(ax);
    }
    cache.x_tilde_raw = h;

    if (model.norm_enabled) {
        // The norm keeps the embedding radius small, which is what ties mu
        // to the spectral bound of the parameterized operator.
        cache.x_tilde = batch_norm_forward(model.norm, cache.x_tilde_raw, training, &cache.bn);
    } else {
        cache.x_tilde = cache.x_tilde_raw;
    }

    if (model.laplacian_kind == LaplacianKind::RandomWalk) {
        cache.op = build_canonical(g, LaplacianKind::RandomWalk);
    } else {
        cache.op = build_parameterized(g, cache.x_tilde, *model.geometry);
    }
    cache.eq = solve_implicit_layer(cache.op, cache.x_tilde, model.mu, model.solver_tol,
                                    model.solver_max_iter);

    Matrix z = cache.eq.z_star;
    if (use_dropout) {
        cache.z_dropout_mask = dropout_mask(*dropout_rng, z.rows(), z.cols(), model.dropout_rate);
        z.array() *= cache.z_dropout_mask.array();
    }

    for (std::size_t l = 0; l < model.output.size(); ++l) {
        cache.out_inputs.push_back(z);
        Matrix preact;
        z = dense_forward(model.output[l], z, &preact);
        cache.out_preacts.push_back(std::move(preact));
        if (use_dropout && l + 1 < model.output.size()) {
            Matrix mask = dropout_mask(*dropout_rng, z.rows(), z.cols(), model.dropout_rate);
            z.array() *= mask.array();
            cache.out_dropout_masks.push_back(std::move(mask));
        }
    }
    cache.node_logits = std::move(z);

    if (model.readout == Readout::Mean) {
        if (segments != nullptr) {
            cache.segments = *segments;
        } else {
            cache.segments = {0, g.num_nodes()};
        }
        if (cache.segments.size() < 2 || cache.segments.front() != 0 ||
            cache.segments.back() != g.num_nodes()) {
            throw InvalidArgument("forward: segments must start at 0 and end at num_nodes");
        }
        const int num_graphs = static_cast<int>(cache.segments.size()) - 1;
        cache.logits = Matrix::Zero(num_graphs, cache.node_logits.cols());
        for (int s = 0; s < num_graphs; ++s) {
            const int lo = cache.segments[static_cast<std::size_t>(s)];
            const int hi = cache.segments[static_cast<std::size_t>(s) + 1];
            if (hi <= lo) throw InvalidArgument("forward: empty segment in mean readout");
            cache.logits.row(s) =
                cache.node_logits.middleRows(lo, hi - lo).colwise().mean();
        }
    } else {
        cache.logits = cache.node_logits;
    }
    return cache;
}

struct LayerGrads {
    Matrix d_weights;
    Vector d_bias;
};

struct Gradients {
    std::vector<LayerGrads> preprocess;
    Vector d_gamma;
    Vector d_beta;
    GeometryGradients geometry;
    std::vector<LayerGrads> output;
    Matrix d_x_tilde;  // includes the geometry path; diagnostic and test hook
};

/// Backward pass by implicit differentiation. The adjoint V solves
/// (I + L/mu)^T V = dl/dZ* with the same fixed-point scheme as the forward
/// solve (convergent under the same well-posedness condition); gradients
/// w.r.t. x_tilde are V itself, and geometry gradients contract
/// d(coeff)/dTheta against -(1/mu) <V_i, Z*_i - Z*_j> per arc.
inline Gradients backward(const DignnModel& model, const ForwardCache& cache,
                          const std::vector<int>& labels, const std::vector<std::uint8_t>& mask) {
    Gradients grads;
    Matrix d_logits = loss_cross_entropy_grad(cache.logits, labels, mask);

    Matrix d_node;
    if (model.readout == Readout::Mean) {
        d_node = Matrix::Zero(cache.node_logits.rows(), cache.node_logits.cols());
        for (std::size_t s = 0; s + 1 < cache.segments.size(); ++s) {
            const int lo = cache.segments[s];
            const int hi = cache.segments[s + 1];
            const double inv = 1.0 / static_cast<double>(hi - lo);
            for (int i = lo; i < hi; ++i) {
                d_node.row(i) = d_logits.row(static_cast<Eigen::Index>(s)) * inv;
            }
        }
    } else {
        d_node = std::move(d_logits);
    }

    grads.output.resize(model.output.size());
    Matrix d_cur = std::move(d_node);
    for (int l = static_cast<int>(model.output.size()) - 1; l >= 0; --l) {
        if (l < static_cast<int>(cache.out_dropout_masks.size())) {
            d_cur.array() *= cache.out_dropout_masks[static_cast<std::size_t>(l)].array();
        }
        DenseGrads dg = dense_backward(model.output[static_cast<std::size_t>(l)],
                                       cache.out_inputs[static_cast<std::size_t>(l)],
                                       cache.out_preacts[static_cast<std::size_t>(l)], d_cur);
        grads.output[static_cast<std::size_t>(l)] = {std::move(dg.d_weights), std::move(dg.d_bias)};
        d_cur = std::move(dg.d_input);
    }
    if (cache.z_dropout_mask.size() > 0) {
        d_cur.array() *= cache.z_dropout_mask.array();
    }
    const Matrix& d_z = d_cur;  // dl/dZ*

    // Adjoint fixed point: U <- -dZ - (1/mu) L^T U, V = -U.
    Matrix u = Matrix::Zero(d_z.rows(), d_z.cols());
    for (int t = 0; t < std::max(model.solver_max_iter, 1); ++t) {
        Matrix u_next = -d_z - cache.op.apply_transpose(u) / model.mu;
        if (!u_next.allFinite()) {
            throw NumericError("backward: adjoint iteration produced non-finite values");
        }
        const double resid = (u_next - u).norm();
        u = std::move(u_next);
        if (resid <= model.solver_tol) break;
    }
    const Matrix v = -u;

    grads.d_x_tilde = v;
    if (model.laplacian_kind == LaplacianKind::Parameterized) {
        const Graph& g = *cache.graph;
        Vector arc_w(g.num_arcs());
        const Matrix& z = cache.eq.z_star;
        for (int a = 0; a < g.num_arcs(); ++a) {
            const int i = g.arc_sources()[static_cast<std::size_t>(a)];
            const int j = g.neighbor_ids()[static_cast<std::size_t>(a)];
            arc_w[a] = -(v.row(i).dot(z.row(i) - z.row(j))) / model.mu;
        }
        accumulate_coeff_gradients(cache.op, cache.x_tilde, *model.geometry, arc_w,
                                   &grads.geometry, &grads.d_x_tilde);
    }

    Matrix d_raw;
    if (model.norm_enabled) {
        BatchNormGrads bg = batch_norm_backward(model.norm, cache.bn, grads.d_x_tilde);
        grads.d_gamma = std::move(bg.d_gamma);
        grads.d_beta = std::move(bg.d_beta);
        d_raw = std::move(bg.d_input);
    } else {
        d_raw = grads.d_x_tilde;
    }

    if (model.preprocess_mode == PreprocessMode::Mlp) {
        grads.preprocess.resize(model.preprocess.size());
        Matrix d_h = std::move(d_raw);
        for (int l = static_cast<int>(model.preprocess.size()) - 1; l >= 0; --l) {
            if (l < static_cast<int>(cache.pre_dropout_masks.size())) {
                d_h.array() *= cache.pre_dropout_masks[static_cast<std::size_t>(l)].array();
            }
            DenseGrads dg = dense_backward(model.preprocess[static_cast<std::size_t>(l)],
                                           cache.pre_inputs[static_cast<std::size_t>(l)],
                                           cache.pre_preacts[static_cast<std::size_t>(l)], d_h);
            grads.preprocess[static_cast<std::size_t>(l)] = {std::move(dg.d_weights),
                                                             std::move(dg.d_bias)};
            d_h = std::move(dg.d_input);
        }
    }

    for (const LayerGrads& lg : grads.preprocess) {
        if (!lg.d_weights.allFinite() || !lg.d_bias.allFinite()) {
            throw NumericError("backward: non-finite preprocess gradient");
        }
    }
    for (const LayerGrads& lg : grads.output) {
        if (!lg.d_weights.allFinite() || !lg.d_bias.allFinite()) {
            throw NumericError("backward: non-finite output gradient");
        }
    }
    return grads;
}

/// Flat parameter/gradient views in a stable order; the gradient structure
/// must come from backward() on the same model.
inline std::vector<ParamGradView> parameter_views(DignnModel& model, const Gradients& grads) {
    std::vector<ParamGradView> views;
    auto add_mat = [&views](const std::string& group, Matrix& p, const Matrix& g) {
        views.push_back({group, p.data(), g.data(), p.size()});
    };
    auto add_vec = [&views](const std::string& group, Vector& p, const Vector& g) {
        views.push_back({group, p.data(), g.data(), p.size()});
    };
    if (model.preprocess_mode == PreprocessMode::Mlp) {
        for (std::size_t l = 0; l < model.preprocess.size(); ++l) {
            add_mat("preprocess", model.preprocess[l].weights, grads.preprocess[l].d_weights);
            add_vec("preprocess", model.preprocess[l].bias, grads.preprocess[l].d_bias);
        }
    }
    if (model.norm_enabled) {
        add_vec("batch_norm", model.norm.gamma, grads.d_gamma);
        add_vec("batch_norm", model.norm.beta, grads.d_beta);
    }
    if (model.laplacian_kind == LaplacianKind::Parameterized) {
        add_mat("theta_chi", model.geometry->theta_chi, grads.geometry.d_theta_chi);
        add_mat("theta_phi", model.geometry->theta_phi, grads.geometry.d_theta_phi);
        add_mat("theta_varphi", model.geometry->theta_varphi, grads.geometry.d_theta_varphi);
    }
    for (std::size_t l = 0; l < model.output.size(); ++l) {
        add_mat("output", model.output[l].weights, grads.output[l].d_weights);
        add_vec("output", model.output[l].bias, grads.output[l].d_bias);
    }
    return views;
}

struct GradCheckGroup {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double step = 0.0;
    double max_rel_error = 0.0;

    bool all_below(double threshold) const { return max_rel_error < threshold; }
};

/// Central-difference check of the implicit gradients, group by group.
/// Dropout is disabled for determinism; batch normalization runs in
/// training mode on both routes so both differentiate the same function.
inline GradCheckReport grad_check(const DignnModel& model, const Graph& g, const Matrix& X,
                                  const std::vector<int>& labels,
                                  const std::vector<std::uint8_t>& mask, double step = 1e-5,
                                  const std::vector<int>* segments = nullptr) {
    DignnModel probe = model;
    probe.dropout_rate = 0.0;

    const BatchNorm norm_snapshot = probe.norm;  // running stats mutate in training mode
    ForwardCache cache = forward(probe, g, X, /*training=*/true, nullptr, segments);
    probe.norm = norm_snapshot;
    const Gradients grads = backward(probe, cache, labels, mask);

    Gradients grads_mut = grads;  // non-const storage for the views
    std::vector<ParamGradView> views = parameter_views(probe, grads_mut);

    auto loss_at = [&]() {
        DignnModel eval_model = probe;  // keep running stats untouched
        const ForwardCache c = forward(eval_model, g, X, /*training=*/true, nullptr, segments);
        return loss_cross_entropy(c.logits, labels, mask);
    };

    GradCheckReport report;
    report.step = step;
    for (ParamGradView& v : views) {
        GradCheckGroup* group = nullptr;
        for (GradCheckGroup& existing : report.groups) {
            if (existing.name == v.group) group = &existing;
        }
        if (group == nullptr) {
            report.groups.push_back({v.group, 0.0});
            group = &report.groups.back();
        }
        for (Eigen::Index i = 0; i < v.size; ++i) {
            const double saved = v.param[i];
            v.param[i] = saved + step;
            const double up = loss_at();
            v.param[i] = saved - step;
            const double down = loss_at();
            v.param[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double an = v.grad[i];
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
            group->max_rel_error = std::max(group->max_rel_error, rel);
        }
    }
    for (const GradCheckGroup& gr : report.groups) {
        report.max_rel_error = std::max(report.max_rel_error, gr.max_rel_error);
    }
    return report;
}

/// Measured norms against the closed-form eigenvalue bound.
struct BoundsReport {
    double theta_chi_norm = 0.0;
    double theta_phi_norm = 0.0;
    double beta_hat = 0.0;
    double bound = 0.0;
    double mu = 0.0;
    bool ok = false;
};

inline BoundsReport monitor_bounds(const DignnModel& model, const Matrix& x_tilde) {
    if (model.laplacian_kind != LaplacianKind::Parameterized || !model.geometry) {
        throw InvalidArgument("monitor_bounds: parameterized kind required");
    }
    BoundsReport rep;
    rep.theta_chi_norm = spectral_norm_estimate(model.geometry->theta_chi);
    rep.theta_phi_norm = spectral_norm_estimate(model.geometry->theta_phi);
    rep.beta_hat = x_tilde.rows() > 0 ? x_tilde.rowwise().norm().maxCoeff() : 0.0;
    const double b_hat = std::max(rep.theta_chi_norm, rep.theta_phi_norm);
    rep.bound = spectral_bound(b_hat, rep.beta_hat);
    rep.mu = model.mu;
    rep.ok = model.mu > rep.bound;
    return rep;
}

/// Fraction of rows whose argmax (ties to the lowest class index) matches
/// the label, over the masked rows.
inline double accuracy(const Matrix& logits, const std::vector<int>& labels,
                       const std::vector<std::uint8_t>& mask) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.rows() ||
        static_cast<Eigen::Index>(mask.size()) != logits.rows()) {
        throw ShapeError("accuracy: labels and mask must match logits rows");
    }
    int correct = 0;
    int count = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        int best = 0;
        for (Eigen::Index j = 1; j < logits.cols(); ++j) {
            if (logits(i, j) > logits(i, best)) best = static_cast<int>(j);
        }
        correct += (best == labels[static_cast<std::size_t>(i)]);
        ++count;
    }
    if (count == 0) throw DomainError("accuracy: empty split");
    return static_cast<double>(correct) / count;
}

}  // namespace dignn
