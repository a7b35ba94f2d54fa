#pragma once

#include <cmath>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dignn/errors.hpp"
#include "dignn/geometry.hpp"
#include "dignn/graph.hpp"
#include "dignn/types.hpp"

namespace dignn {

enum class LaplacianKind { Unnormalized, RandomWalk, Normalized, Parameterized };

inline std::string to_string(LaplacianKind k) {
    switch (k) {
        case LaplacianKind::Unnormalized: return "unnormalized";
        case LaplacianKind::RandomWalk: return "random_walk";
        case LaplacianKind::Normalized: return "normalized";
        case LaplacianKind::Parameterized: return "parameterized";
    }
    return "unknown";
}

inline LaplacianKind laplacian_kind_from_string(const std::string& s) {
    if (s == "unnormalized" || s == "un") return LaplacianKind::Unnormalized;
    if (s == "random_walk" || s == "rw") return LaplacianKind::RandomWalk;
    if (s == "normalized" || s == "n") return LaplacianKind::Normalized;
    if (s == "parameterized" || s == "param") return LaplacianKind::Parameterized;
    throw InvalidArgument("unknown laplacian kind: " + s);
}

/// Intermediates of the feature-parameterized geometry, kept so the
/// backward pass can differentiate the per-arc coefficients without
/// recomputing the forward chain. Rows of `c` and `e` are the per-node
/// embeddings theta_chi x_i and theta_phi theta_chi x_i; per-arc arrays
/// follow Graph arc order.
struct ParamCache {
    Matrix c;                    // N x h_chi
    Vector c_norm;               // ||c_i||
    Vector tanh_c_norm;          // tanh ||c_i||
    std::vector<char> floored;   // vertex measure clamped at epsilon * D_i
    Matrix e;                    // N x h_phi
    Matrix v;                    // arcs x h_varphi, theta_varphi (x_i - x_j)
    Vector r;                    // ||v_a||
    Vector t;                    // tanh(1 / (r + eps)), the diffusivity squared over A
    Vector p;                    // <e_i, e_j>
    Vector phi;                  // tanh |p|
    int zero_phi_arcs = 0;
};

/// A materialized graph Laplacian. Every kind acts as
///   (L f)(i) = diag(i) f(i) - sum_{arcs (i,j)} coeff(a) f(j),
/// where coeff is varphi^2 phi / chi(i) in the generic case and carries the
/// degree scalings for the canonical kinds. The operator references (does
/// not own) the graph, which must outlive it. Immutable after construction.
class LaplacianOperator {
public:
    LaplacianKind kind() const { return kind_; }
    const Graph& graph() const { return *graph_; }
    const Vector& coeff() const { return coeff_; }
    const Vector& diag() const { return diag_; }
    const Vector& chi() const { return chi_; }
    const Vector& dhat() const { return dhat_; }
    const std::shared_ptr<const ParamCache>& param_cache() const { return param_cache_; }

    /// varphi([i,j])^2 phi([i,j]) for an arc; the graph weight A_ij for the
    /// canonical kinds.
    double arc_kernel_product(int a) const {
        if (kind_ == LaplacianKind::Parameterized) {
            return coeff_[a] * chi_[graph_->arc_sources()[static_cast<std::size_t>(a)]];
        }
        return graph_->edge_weights()[static_cast<std::size_t>(a)];
    }

    /// Vertex weights under which this operator is self-adjoint and PSD and
    /// the energy identity S(f) = <f, Lf>_V holds. All-ones for the
    /// normalized kind (which is symmetric in the unweighted space), chi
    /// otherwise.
    Vector vertex_weights_for_energy() const {
        if (kind_ == LaplacianKind::Normalized) return Vector::Ones(graph_->num_nodes());
        return chi_;
    }

    Matrix apply(const Matrix& f) const {
        check_rows(f, "apply");
        Matrix out(f.rows(), f.cols());
        for (int i = 0; i < graph_->num_nodes(); ++i) {
            out.row(i) = diag_[i] * f.row(i);
            for (int a = graph_->arc_begin(i); a < graph_->arc_end(i); ++a) {
                out.row(i) -= coeff_[a] * f.row(graph_->neighbor_ids()[static_cast<std::size_t>(a)]);
            }
        }
        return out;
    }

    /// L^T f. Coincides with apply for the symmetric kinds; the random-walk
    /// and parameterized kinds are only self-adjoint in the chi-weighted
    /// inner product, so their transpose differs.
    Matrix apply_transpose(const Matrix& f) const {
        check_rows(f, "apply_transpose");
        Matrix out(f.rows(), f.cols());
        for (int i = 0; i < graph_->num_nodes(); ++i) {
            out.row(i) = diag_[i] * f.row(i);
            for (int a = graph_->arc_begin(i); a < graph_->arc_end(i); ++a) {
                const int rev = graph_->reverse_arcs()[static_cast<std::size_t>(a)];
                out.row(i) -= coeff_[rev] * f.row(graph_->neighbor_ids()[static_cast<std::size_t>(a)]);
            }
        }
        return out;
    }

    /// Dense N x N materialization (columns equal apply on basis vectors).
    Matrix to_dense(int cap = 2000) const {
        const int n = graph_->num_nodes();
        if (n > cap) {
            throw DomainError("to_dense: graph exceeds dense cap (" + std::to_string(n) + " > " +
                              std::to_string(cap) + ")");
        }
        Matrix m = Matrix::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            m(i, i) = diag_[i];
            for (int a = graph_->arc_begin(i); a < graph_->arc_end(i); ++a) {
                m(i, graph_->neighbor_ids()[static_cast<std::size_t>(a)]) -= coeff_[a];
            }
        }
        return m;
    }

    /// Dirichlet energy S(f) = 1/2 sum varphi^2 phi ||f(j) - f(i)||^2; the
    /// normalized kind uses its degree-scaled differences.
    double dirichlet_energy(const Matrix& f) const {
        check_rows(f, "dirichlet_energy");
        double s = 0.0;
        if (kind_ == LaplacianKind::Normalized) {
            for (int a = 0; a < graph_->num_arcs(); ++a) {
                const int i = graph_->arc_sources()[static_cast<std::size_t>(a)];
                const int j = graph_->neighbor_ids()[static_cast<std::size_t>(a)];
                const double w = graph_->edge_weights()[static_cast<std::size_t>(a)];
                s += w * (f.row(j) * inv_sqrt_deg_[j] - f.row(i) * inv_sqrt_deg_[i]).squaredNorm();
            }
        } else {
            for (int a = 0; a < graph_->num_arcs(); ++a) {
                const int i = graph_->arc_sources()[static_cast<std::size_t>(a)];
                const int j = graph_->neighbor_ids()[static_cast<std::size_t>(a)];
                s += arc_kernel_product(a) * (f.row(j) - f.row(i)).squaredNorm();
            }
        }
        return 0.5 * s;
    }

    /// Gradient of the Dirichlet energy: 2 chi(i) (Lf)(i) in the weighted
    /// space, which specializes to 2 (Lf)(i) for the normalized kind.
    Matrix dirichlet_energy_gradient(const Matrix& f) const {
        Matrix g = apply(f);
        const Vector w = vertex_weights_for_energy();
        for (int i = 0; i < graph_->num_nodes(); ++i) g.row(i) *= 2.0 * w[i];
        return g;
    }

private:
    friend LaplacianOperator build_canonical(const Graph&, LaplacianKind);
    friend LaplacianOperator build_from_geometry(const Graph&, const VertexMeasure&,
                                                 const EdgeKernel&);
    friend LaplacianOperator build_parameterized(const Graph&, const Matrix&,
                                                 const GeometryParams&);

    void check_rows(const Matrix& f, const char* where) const {
        if (f.rows() != graph_->num_nodes()) {
            throw ShapeError(std::string(where) + ": input must have one row per node");
        }
    }

    LaplacianKind kind_ = LaplacianKind::Unnormalized;
    const Graph* graph_ = nullptr;
    Vector coeff_;
    Vector diag_;
    Vector chi_;
    Vector dhat_;
    Vector inv_sqrt_deg_;  // normalized kind only
    std::shared_ptr<const ParamCache> param_cache_;
};

inline LaplacianOperator build_canonical(const Graph& g, LaplacianKind kind) {
    if (kind == LaplacianKind::Parameterized) {
        throw InvalidArgument("build_canonical: parameterized kind needs features, use build_parameterized");
    }
    const int n = g.num_nodes();
    const int m = g.num_arcs();
    const Vector deg = degrees(g);
    if (kind != LaplacianKind::Unnormalized) {
        for (int i = 0; i < n; ++i) {
            if (!(deg[i] > 0.0)) {
                throw DomainError("build_canonical: zero degree at node " + std::to_string(i) +
                                  " (isolated nodes are not supported by this kind)");
            }
        }
    }
    LaplacianOperator op;
    op.kind_ = kind;
    op.graph_ = &g;
    op.coeff_.resize(m);
    op.diag_.resize(n);
    op.dhat_ = deg;
    switch (kind) {
        case LaplacianKind::Unnormalized:
            for (int a = 0; a < m; ++a) op.coeff_[a] = g.edge_weights()[static_cast<std::size_t>(a)];
            op.diag_ = deg;
            op.chi_ = Vector::Ones(n);
            break;
        case LaplacianKind::RandomWalk:
            for (int a = 0; a < m; ++a) {
                op.coeff_[a] = g.edge_weights()[static_cast<std::size_t>(a)] /
                               deg[g.arc_sources()[static_cast<std::size_t>(a)]];
            }
            op.diag_ = Vector::Ones(n);
            op.chi_ = deg;
            break;
        case LaplacianKind::Normalized: {
            op.inv_sqrt_deg_.resize(n);
            for (int i = 0; i < n; ++i) op.inv_sqrt_deg_[i] = 1.0 / std::sqrt(deg[i]);
            for (int a = 0; a < m; ++a) {
                const int i = g.arc_sources()[static_cast<std::size_t>(a)];
                const int j = g.neighbor_ids()[static_cast<std::size_t>(a)];
                op.coeff_[a] = g.edge_weights()[static_cast<std::size_t>(a)] *
                               op.inv_sqrt_deg_[i] * op.inv_sqrt_deg_[j];
            }
            op.diag_ = Vector::Ones(n);
            op.chi_ = deg.array().sqrt();
            break;
        }
        case LaplacianKind::Parameterized: break;  // unreachable
    }
    return op;
}

/// Generic operator from explicit measures: coeff = varphi^2 phi / chi(i).
inline LaplacianOperator build_from_geometry(const Graph& g, const VertexMeasure& m,
                                             const EdgeKernel& k) {
    if (m.chi.size() != g.num_nodes()) {
        throw ShapeError("build_from_geometry: measure length must match node count");
    }
    if (k.phi.size() != g.num_arcs() || k.varphi.size() != g.num_arcs()) {
        throw ShapeError("build_from_geometry: kernel must match graph arcs");
    }
    LaplacianOperator op;
    op.kind_ = LaplacianKind::Parameterized;
    op.graph_ = &g;
    op.chi_ = m.chi;
    op.coeff_.resize(g.num_arcs());
    op.dhat_ = Vector::Zero(g.num_nodes());
    op.diag_ = Vector::Zero(g.num_nodes());
    for (int a = 0; a < g.num_arcs(); ++a) {
        const int i = g.arc_sources()[static_cast<std::size_t>(a)];
        const double prod = k.varphi[a] * k.varphi[a] * k.phi[a];
        op.coeff_[a] = prod / m.chi[i];
        op.dhat_[i] += prod;
        op.diag_[i] += op.coeff_[a];
    }
    return op;
}

/// Feature-parameterized Laplacian. With row embeddings x_i:
///   chi(i)      = D_i tanh ||theta_chi x_i||            (floored at eps D_i)
///   phi([i,j])  = tanh |<theta_phi theta_chi x_i, theta_phi theta_chi x_j>|
///   varphi^2    = A_ij tanh((||theta_varphi (x_i - x_j)|| + eps)^-1)
/// The coefficients are cached once; the operator stays linear in f.
inline LaplacianOperator build_parameterized(const Graph& g, const Matrix& X,
                                             const GeometryParams& p) {
    const int n = g.num_nodes();
    const int m = g.num_arcs();
    if (X.rows() != n) throw ShapeError("build_parameterized: X must have one row per node");
    if (!X.allFinite()) throw NumericError("build_parameterized: non-finite feature");
    validate_geometry(p, static_cast<int>(X.cols()));

    auto cache = std::make_shared<ParamCache>();
    cache->c = X * p.theta_chi.transpose();
    cache->e = cache->c * p.theta_phi.transpose();
    cache->c_norm.resize(n);
    cache->tanh_c_norm.resize(n);
    cache->floored.assign(static_cast<std::size_t>(n), 0);
    const Vector deg = degrees(g);

    LaplacianOperator op;
    op.kind_ = LaplacianKind::Parameterized;
    op.graph_ = &g;
    op.chi_.resize(n);
    for (int i = 0; i < n; ++i) {
        cache->c_norm[i] = cache->c.row(i).norm();
        cache->tanh_c_norm[i] = std::tanh(cache->c_norm[i]);
        double chi = deg[i] * cache->tanh_c_norm[i];
        const double floor = p.epsilon * deg[i];
        if (chi < floor) {
            chi = floor;
            cache->floored[static_cast<std::size_t>(i)] = 1;
        }
        op.chi_[i] = chi;
    }

    cache->v.resize(m, p.theta_varphi.rows());
    cache->r.resize(m);
    cache->t.resize(m);
    cache->p.resize(m);
    cache->phi.resize(m);
    op.coeff_.resize(m);
    op.dhat_ = Vector::Zero(n);
    op.diag_ = Vector::Zero(n);
    for (int a = 0; a < m; ++a) {
        const int i = g.arc_sources()[static_cast<std::size_t>(a)];
        const int j = g.neighbor_ids()[static_cast<std::size_t>(a)];
        cache->v.row(a) = (X.row(i) - X.row(j)) * p.theta_varphi.transpose();
        cache->r[a] = cache->v.row(a).norm();
        cache->t[a] = std::tanh(1.0 / (cache->r[a] + p.epsilon));
        cache->p[a] = cache->e.row(i).dot(cache->e.row(j));
        cache->phi[a] = std::tanh(std::abs(cache->p[a]));
        if (cache->phi[a] == 0.0 && i < j) ++cache->zero_phi_arcs;
        const double prod = g.edge_weights()[static_cast<std::size_t>(a)] * cache->t[a] * cache->phi[a];
        op.coeff_[a] = prod / op.chi_[i];
        op.dhat_[i] += prod;
        op.diag_[i] += op.coeff_[a];
    }
    op.param_cache_ = std::move(cache);
    return op;
}

/// Writes per-arc coefficients as `i,j,coeff` CSV for geometry inspection.
inline void write_coefficients_csv(const LaplacianOperator& op, std::ostream& out) {
    out << "i,j,coeff\n";
    const Graph& g = op.graph();
    for (int a = 0; a < g.num_arcs(); ++a) {
        out << g.arc_sources()[static_cast<std::size_t>(a)] << ','
            << g.neighbor_ids()[static_cast<std::size_t>(a)] << ','
            << format_double(op.coeff()[a]) << '\n';
    }
}

struct GeometryGradients {
    Matrix d_theta_chi;
    Matrix d_theta_phi;
    Matrix d_theta_varphi;
};

/// Accumulates d(sum_a w_a coeff_a)/dTheta and the matching feature-path
/// derivative into dX for a parameterized operator. Each arc weight w_a
/// multiplies the derivative of its own coefficient, so callers realize
/// d(L f)/dTheta-style products by choosing w_a. Floored vertex measures
/// contribute zero through the chi path.
inline void accumulate_coeff_gradients(const LaplacianOperator& op, const Matrix& X,
                                       const GeometryParams& params, const Vector& arc_weights,
                                       GeometryGradients* gg, Matrix* dX) {
    if (op.kind() != LaplacianKind::Parameterized || !op.param_cache()) {
        throw InvalidArgument("accumulate_coeff_gradients: operator has no parameterized cache");
    }
    const Graph& g = op.graph();
    const ParamCache& pc = *op.param_cache();
    if (arc_weights.size() != g.num_arcs()) {
        throw ShapeError("accumulate_coeff_gradients: one weight per arc required");
    }
    if (gg != nullptr) {
        if (gg->d_theta_chi.size() == 0) gg->d_theta_chi = Matrix::Zero(params.theta_chi.rows(), params.theta_chi.cols());
        if (gg->d_theta_phi.size() == 0) gg->d_theta_phi = Matrix::Zero(params.theta_phi.rows(), params.theta_phi.cols());
        if (gg->d_theta_varphi.size() == 0) gg->d_theta_varphi = Matrix::Zero(params.theta_varphi.rows(), params.theta_varphi.cols());
    }
    const Vector deg = degrees(g);
    for (int a = 0; a < g.num_arcs(); ++a) {
        const double w = arc_weights[a];
        if (w == 0.0) continue;
        const int i = g.arc_sources()[static_cast<std::size_t>(a)];
        const int j = g.neighbor_ids()[static_cast<std::size_t>(a)];
        const double A = g.edge_weights()[static_cast<std::size_t>(a)];
        const double chi = op.chi()[i];
        const double t = pc.t[a];
        const double phi = pc.phi[a];

        // Diffusivity path through t = tanh(1/(r + eps)).
        const double dt = (1.0 - t * t) * (-1.0 / ((pc.r[a] + params.epsilon) * (pc.r[a] + params.epsilon)));
        if (pc.r[a] > 0.0 && dt != 0.0) {
            const double gt = w * (A * phi / chi) * dt;
            const Vector dir = pc.v.row(a).transpose() / pc.r[a];
            if (gg != nullptr) {
                gg->d_theta_varphi.noalias() += gt * dir * (X.row(i) - X.row(j));
            }
            if (dX != nullptr) {
                const Vector back = params.theta_varphi.transpose() * dir;
                dX->row(i) += gt * back.transpose();
                dX->row(j) -= gt * back.transpose();
            }
        }

        // Edge measure path through phi = tanh |p|.
        const double sgn = (pc.p[a] > 0.0) ? 1.0 : (pc.p[a] < 0.0 ? -1.0 : 0.0);
        if (sgn != 0.0) {
            const double gp = w * (A * t / chi) * (1.0 - phi * phi) * sgn;
            if (gp != 0.0) {
                const Vector ei = pc.e.row(i).transpose();
                const Vector ej = pc.e.row(j).transpose();
                if (gg != nullptr) {
                    gg->d_theta_phi.noalias() += gp * (ej * pc.c.row(i) + ei * pc.c.row(j));
                    gg->d_theta_chi.noalias() +=
                        gp * ((params.theta_phi.transpose() * ej) * X.row(i) +
                              (params.theta_phi.transpose() * ei) * X.row(j));
                }
                if (dX != nullptr) {
                    dX->row(i) += gp * (params.theta_chi.transpose() * (params.theta_phi.transpose() * ej)).transpose();
                    dX->row(j) += gp * (params.theta_chi.transpose() * (params.theta_phi.transpose() * ei)).transpose();
                }
            }
        }

        // Vertex measure path through chi = D tanh ||c_i||.
        if (!pc.floored[static_cast<std::size_t>(i)] && pc.c_norm[i] > 0.0) {
            const double th = pc.tanh_c_norm[i];
            const double gc = w * (-(A * t * phi) / (chi * chi)) * deg[i] * (1.0 - th * th) / pc.c_norm[i];
            if (gc != 0.0) {
                const Vector ci = pc.c.row(i).transpose();
                if (gg != nullptr) gg->d_theta_chi.noalias() += gc * ci * X.row(i);
                if (dX != nullptr) dX->row(i) += gc * (params.theta_chi.transpose() * ci).transpose();
            }
        }
    }
}

}  // namespace dignn
