#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <vector>

#include "dignn/geometry.hpp"
#include "dignn/graph.hpp"
#include "dignn/laplacian.hpp"
#include "dignn/rng.hpp"
#include "dignn/types.hpp"

namespace testutil {

using dignn::Matrix;
using dignn::Vector;

/// Random connected graph: a random spanning tree plus extra edges with the
/// given probability. Weights uniform in [0.5, 1.5].
inline dignn::Graph random_connected_graph(dignn::Rng& rng, int n, double extra_prob = 0.15,
                                           bool unit_weights = false) {
    std::vector<dignn::WeightedEdge> edges;
    for (int i = 1; i < n; ++i) {
        const int j = rng.uniform_int(i);
        edges.push_back({i, j, unit_weights ? 1.0 : rng.uniform(0.5, 1.5)});
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (rng.uniform() < extra_prob) {
                edges.push_back({i, j, unit_weights ? 1.0 : rng.uniform(0.5, 1.5)});
            }
        }
    }
    return dignn::build_graph(n, edges);
}

inline Matrix random_matrix(dignn::Rng& rng, int rows, int cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

inline Vector random_positive_vector(dignn::Rng& rng, int n, double lo = 0.2, double hi = 2.0) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
    return v;
}

/// Random symmetric positive per-arc kernel.
inline dignn::EdgeKernel random_edge_kernel(dignn::Rng& rng, const dignn::Graph& g) {
    Vector phi(g.num_arcs()), varphi(g.num_arcs());
    for (int a = 0; a < g.num_arcs(); ++a) {
        const int i = g.arc_sources()[static_cast<std::size_t>(a)];
        const int j = g.neighbor_ids()[static_cast<std::size_t>(a)];
        if (i < j) {
            phi[a] = rng.uniform(0.2, 2.0);
            varphi[a] = rng.uniform(0.2, 2.0);
        }
    }
    for (int a = 0; a < g.num_arcs(); ++a) {
        const int i = g.arc_sources()[static_cast<std::size_t>(a)];
        const int j = g.neighbor_ids()[static_cast<std::size_t>(a)];
        if (i > j) {
            const int r = g.reverse_arcs()[static_cast<std::size_t>(a)];
            phi[a] = phi[r];
            varphi[a] = varphi[r];
        }
    }
    return dignn::EdgeKernel{std::move(phi), std::move(varphi)};
}

/// Exact dominant eigenvalue via a dense symmetric eigensolve of
/// W^{1/2} L W^{-1/2}, where W is the measure making L self-adjoint.
inline double dense_lambda_max(const dignn::LaplacianOperator& op) {
    const Matrix dense = op.to_dense();
    const Vector w = op.vertex_weights_for_energy();
    const int n = static_cast<int>(dense.rows());
    Matrix sym(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            sym(i, j) = std::sqrt(w[i]) * dense(i, j) / std::sqrt(w[j]);
    sym = 0.5 * (sym + sym.transpose().eval());  // scrub asymmetric roundoff
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    return es.eigenvalues().maxCoeff();
}

/// Geometry parameters with entries scaled so that tanh arguments stay in a
/// responsive range.
inline dignn::GeometryParams random_geometry(dignn::Rng& rng, int feature_dim, int h_chi = 3,
                                             int h_phi = 3, int h_varphi = 3) {
    dignn::GeometryParams p;
    p.theta_chi = random_matrix(rng, h_chi, feature_dim, 0.7);
    p.theta_phi = random_matrix(rng, h_phi, h_chi, 0.7);
    p.theta_varphi = random_matrix(rng, h_varphi, feature_dim, 0.7);
    p.epsilon = 1e-6;
    return p;
}

}  // namespace testutil
