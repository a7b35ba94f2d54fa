#pragma once

#include <cmath>
#include <string>

#include "dignn/errors.hpp"
#include "dignn/graph.hpp"
#include "dignn/types.hpp"

namespace dignn {

/// Vertex measure chi defining the inner product on vertex functions,
/// <f, g>_V = sum_i <f(i), g(i)> chi(i). Strictly positive.
struct VertexMeasure {
    Vector chi;
};

inline VertexMeasure make_vertex_measure(Vector chi) {
    for (Eigen::Index i = 0; i < chi.size(); ++i) {
        if (!(chi[i] > 0.0) || !std::isfinite(chi[i])) {
            throw InvalidArgument("vertex measure: chi must be strictly positive and finite");
        }
    }
    return VertexMeasure{std::move(chi)};
}

inline VertexMeasure unit_vertex_measure(const Graph& g) {
    return VertexMeasure{Vector::Ones(g.num_nodes())};
}

/// Edge measure phi and gradient diffusivity varphi, stored per arc and
/// aligned with Graph arc storage. Both are symmetric across arc reversal;
/// phi may vanish on an arc (which removes it from every operator), varphi
/// is strictly positive.
struct EdgeKernel {
    Vector phi;
    Vector varphi;
};

inline EdgeKernel make_edge_kernel(const Graph& g, Vector phi, Vector varphi) {
    const int m = g.num_arcs();
    if (phi.size() != m || varphi.size() != m) {
        throw ShapeError("edge kernel: arrays must have one entry per arc");
    }
    for (int a = 0; a < m; ++a) {
        if (!(phi[a] >= 0.0) || !std::isfinite(phi[a])) {
            throw InvalidArgument("edge kernel: phi must be non-negative and finite");
        }
        if (!(varphi[a] > 0.0) || !std::isfinite(varphi[a])) {
            throw InvalidArgument("edge kernel: varphi must be strictly positive and finite");
        }
        const int r = g.reverse_arcs()[static_cast<std::size_t>(a)];
        if (phi[a] != phi[r] || varphi[a] != varphi[r]) {
            throw InvalidArgument("edge kernel: phi and varphi must be symmetric across arc reversal");
        }
    }
    return EdgeKernel{std::move(phi), std::move(varphi)};
}

inline EdgeKernel unit_edge_kernel(const Graph& g) {
    return EdgeKernel{Vector::Ones(g.num_arcs()), Vector::Ones(g.num_arcs())};
}

/// The canonical kernel realizing varphi^2 * phi = A_ij: phi = 1,
/// varphi = sqrt(A_ij).
inline EdgeKernel canonical_edge_kernel(const Graph& g) {
    Vector varphi(g.num_arcs());
    for (int a = 0; a < g.num_arcs(); ++a) {
        varphi[a] = std::sqrt(g.edge_weights()[static_cast<std::size_t>(a)]);
    }
    return EdgeKernel{Vector::Ones(g.num_arcs()), std::move(varphi)};
}

/// Learnable geometry: theta_chi (h_chi x d) sets the vertex measure,
/// theta_phi (h_phi x h_chi) the edge measure, theta_varphi (h_varphi x d)
/// the gradient diffusivity. epsilon guards the reciprocal in the
/// diffusivity and floors the vertex measure; norm_bound_B and
/// embed_bound_beta are the constants of the spectral range bound.
struct GeometryParams {
    Matrix theta_chi;
    Matrix theta_phi;
    Matrix theta_varphi;
    double epsilon = 1e-6;
    double norm_bound_B = 1.0;
    double embed_bound_beta = 1.0;
};

inline void validate_geometry(const GeometryParams& p, int feature_dim) {
    if (p.theta_chi.cols() != feature_dim) {
        throw ShapeError("geometry: theta_chi must have one column per feature");
    }
    if (p.theta_phi.cols() != p.theta_chi.rows()) {
        throw ShapeError("geometry: theta_phi columns must match theta_chi rows");
    }
    if (p.theta_varphi.cols() != feature_dim) {
        throw ShapeError("geometry: theta_varphi must have one column per feature");
    }
    if (!(p.epsilon > 0.0)) throw InvalidArgument("geometry: epsilon must be positive");
    if (!(p.norm_bound_B > 0.0) || !(p.embed_bound_beta > 0.0)) {
        throw InvalidArgument("geometry: bound constants must be positive");
    }
}

/// <f, g>_V = sum_i <f(i), g(i)> chi(i).
inline double vertex_inner_product(const Matrix& f, const Matrix& g, const VertexMeasure& m) {
    if (f.rows() != g.rows() || f.cols() != g.cols()) {
        throw ShapeError("vertex_inner_product: shape mismatch");
    }
    if (f.rows() != m.chi.size()) {
        throw ShapeError("vertex_inner_product: measure length must match rows");
    }
    return ((f.array() * g.array()).rowwise().sum() * m.chi.array()).sum();
}

/// <F, G>_E = (1/2) sum_arcs <F(a), G(a)> phi(a). The 1/2 compensates for
/// each undirected edge being stored as two arcs.
inline double edge_inner_product(const Matrix& F, const Matrix& G, const Graph& g,
                                 const EdgeKernel& k) {
    if (F.rows() != G.rows() || F.cols() != G.cols()) {
        throw ShapeError("edge_inner_product: shape mismatch");
    }
    if (F.rows() != g.num_arcs() || k.phi.size() != g.num_arcs()) {
        throw ShapeError("edge_inner_product: arc arrays must match graph arcs");
    }
    return 0.5 * ((F.array() * G.array()).rowwise().sum() * k.phi.array()).sum();
}

enum class GradientMode { Standard, Normalized };

/// Arc-valued difference operator. Standard mode:
///   (grad f)([i,j]) = varphi([i,j]) (f(j) - f(i)).
/// Normalized mode scales each endpoint by 1/sqrt(D):
///   (grad f)([i,j]) = varphi([i,j]) (f(j)/sqrt(D_j) - f(i)/sqrt(D_i)).
inline Matrix graph_gradient(const Matrix& f, const Graph& g, const EdgeKernel& k,
                             GradientMode mode = GradientMode::Standard,
                             const Vector* deg = nullptr) {
    if (f.rows() != g.num_nodes()) {
        throw ShapeError("graph_gradient: f must have one row per node");
    }
    if (k.varphi.size() != g.num_arcs()) {
        throw ShapeError("graph_gradient: kernel must match graph arcs");
    }
    Vector inv_sqrt_deg;
    if (mode == GradientMode::Normalized) {
        if (deg == nullptr || deg->size() != g.num_nodes()) {
            throw ShapeError("graph_gradient: normalized mode needs a degree vector");
        }
        inv_sqrt_deg.resize(g.num_nodes());
        for (int i = 0; i < g.num_nodes(); ++i) {
            if (!((*deg)[i] > 0.0)) {
                throw DomainError("graph_gradient: zero degree in normalized mode at node " +
                                  std::to_string(i));
            }
            inv_sqrt_deg[i] = 1.0 / std::sqrt((*deg)[i]);
        }
    }
    Matrix out(g.num_arcs(), f.cols());
    for (int a = 0; a < g.num_arcs(); ++a) {
        const int i = g.arc_sources()[static_cast<std::size_t>(a)];
        const int j = g.neighbor_ids()[static_cast<std::size_t>(a)];
        if (mode == GradientMode::Standard) {
            out.row(a) = k.varphi[a] * (f.row(j) - f.row(i));
        } else {
            out.row(a) = k.varphi[a] * (f.row(j) * inv_sqrt_deg[j] - f.row(i) * inv_sqrt_deg[i]);
        }
    }
    return out;
}

/// Adjoint of the standard gradient:
///   (div g)(i) = 1/(2 chi(i)) sum_j varphi phi (g([i,j]) - g([j,i])).
inline Matrix graph_divergence(const Matrix& arc_fun, const Graph& g, const VertexMeasure& m,
                               const EdgeKernel& k) {
    if (arc_fun.rows() != g.num_arcs()) {
        throw ShapeError("graph_divergence: arc function must match graph arcs");
    }
    if (m.chi.size() != g.num_nodes() || k.phi.size() != g.num_arcs()) {
        throw ShapeError("graph_divergence: measure/kernel mismatch");
    }
    Matrix out = Matrix::Zero(g.num_nodes(), arc_fun.cols());
    for (int a = 0; a < g.num_arcs(); ++a) {
        const int i = g.arc_sources()[static_cast<std::size_t>(a)];
        const int r = g.reverse_arcs()[static_cast<std::size_t>(a)];
        out.row(i) += k.varphi[a] * k.phi[a] * (arc_fun.row(a) - arc_fun.row(r));
    }
    for (int i = 0; i < g.num_nodes(); ++i) {
        out.row(i) /= 2.0 * m.chi[i];
    }
    return out;
}

}  // namespace dignn
