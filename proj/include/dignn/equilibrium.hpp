#pragma once

#include <Eigen/LU>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dignn/errors.hpp"
#include "dignn/laplacian.hpp"
#include "dignn/rng.hpp"
#include "dignn/types.hpp"

namespace dignn {

/// Nodes with target constraints: indicator delta_i marks membership, and
/// padded_targets holds y(i) on constrained rows and zero elsewhere.
struct ConstraintSet {
    std::vector<int> constrained_nodes;
    Matrix targets;                   // |I| x c
    std::vector<std::uint8_t> indicator;  // per node, 0/1
    Matrix padded_targets;            // N x c
};

inline ConstraintSet make_constraint_set(int num_nodes, const std::vector<int>& nodes,
                                         const Matrix& targets) {
    if (static_cast<Eigen::Index>(nodes.size()) != targets.rows()) {
        throw ShapeError("constraint set: one target row per constrained node required");
    }
    ConstraintSet cs;
    cs.constrained_nodes = nodes;
    cs.targets = targets;
    cs.indicator.assign(static_cast<std::size_t>(num_nodes), 0);
    cs.padded_targets = Matrix::Zero(num_nodes, targets.cols());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const int i = nodes[k];
        if (i < 0 || i >= num_nodes) throw InvalidArgument("constraint set: node index out of range");
        if (cs.indicator[static_cast<std::size_t>(i)]) {
            throw InvalidArgument("constraint set: duplicate constrained node " + std::to_string(i));
        }
        cs.indicator[static_cast<std::size_t>(i)] = 1;
        cs.padded_targets.row(i) = targets.row(static_cast<Eigen::Index>(k));
    }
    return cs;
}

/// Row-stochastic diffusion matrix P_ij = varphi^2 phi / Dhat_i with
/// Dhat_i = sum_k varphi^2 phi over arcs of i.
struct MarkovMatrix {
    const Graph* graph = nullptr;
    Vector p;     // per arc
    Vector dhat;  // per node
};

inline MarkovMatrix build_markov(const LaplacianOperator& op) {
    const Graph& g = op.graph();
    MarkovMatrix mm;
    mm.graph = &g;
    mm.dhat = op.dhat();
    mm.p.resize(g.num_arcs());
    for (int i = 0; i < g.num_nodes(); ++i) {
        if (!(mm.dhat[i] > 0.0)) {
            throw DomainError("build_markov: isolated node " + std::to_string(i) +
                              " (Dhat must be positive)");
        }
        for (int a = g.arc_begin(i); a < g.arc_end(i); ++a) {
            mm.p[a] = op.arc_kernel_product(a) / mm.dhat[i];
        }
    }
    return mm;
}

inline Matrix apply_markov(const MarkovMatrix& mm, const Matrix& f) {
    const Graph& g = *mm.graph;
    if (f.rows() != g.num_nodes()) throw ShapeError("apply_markov: one row per node required");
    Matrix out = Matrix::Zero(f.rows(), f.cols());
    for (int a = 0; a < g.num_arcs(); ++a) {
        out.row(g.arc_sources()[static_cast<std::size_t>(a)]) +=
            mm.p[a] * f.row(g.neighbor_ids()[static_cast<std::size_t>(a)]);
    }
    return out;
}

inline Matrix apply_markov_transpose(const MarkovMatrix& mm, const Matrix& f) {
    const Graph& g = *mm.graph;
    if (f.rows() != g.num_nodes()) throw ShapeError("apply_markov_transpose: one row per node required");
    Matrix out = Matrix::Zero(f.rows(), f.cols());
    for (int a = 0; a < g.num_arcs(); ++a) {
        out.row(g.neighbor_ids()[static_cast<std::size_t>(a)]) +=
            mm.p[a] * f.row(g.arc_sources()[static_cast<std::size_t>(a)]);
    }
    return out;
}

/// Stationary distribution pi_i = Dhat_i / sum_j Dhat_j (satisfies pi P = pi).
inline Vector stationary_distribution(const MarkovMatrix& mm) {
    return mm.dhat / mm.dhat.sum();
}

/// Row-mixed fixed-point operator: row i is P_i for unconstrained nodes and
/// -(1/mu) L_i for constrained nodes, so the equilibrium of f = Y' + C f
/// solves the constrained Dirichlet minimization.
struct ConstrainedSystem {
    const LaplacianOperator* op = nullptr;
    MarkovMatrix markov;
    ConstraintSet constraints;
    double mu = 0.0;
};

inline ConstrainedSystem build_constrained_system(const LaplacianOperator& op, MarkovMatrix markov,
                                                  ConstraintSet cs, double mu) {
    const int n = op.graph().num_nodes();
    if (markov.graph != &op.graph()) {
        throw InvalidArgument("build_constrained_system: markov matrix built on a different graph");
    }
    if (static_cast<int>(cs.indicator.size()) != n || cs.padded_targets.rows() != n) {
        throw ShapeError("build_constrained_system: constraint set sized for a different graph");
    }
    if (!(mu > 0.0)) throw InvalidArgument("build_constrained_system: mu must be positive");
    return ConstrainedSystem{&op, std::move(markov), std::move(cs), mu};
}

inline Matrix apply_system(const ConstrainedSystem& sys, const Matrix& f) {
    const Matrix lap = sys.op->apply(f);
    const Matrix dif = apply_markov(sys.markov, f);
    Matrix out(f.rows(), f.cols());
    for (int i = 0; i < static_cast<int>(sys.constraints.indicator.size()); ++i) {
        if (sys.constraints.indicator[static_cast<std::size_t>(i)]) {
            out.row(i) = -lap.row(i) / sys.mu;
        } else {
            out.row(i) = dif.row(i);
        }
    }
    return out;
}

inline Matrix apply_system_transpose(const ConstrainedSystem& sys, const Matrix& f) {
    Matrix masked_c = f;
    Matrix masked_u = f;
    for (int i = 0; i < static_cast<int>(sys.constraints.indicator.size()); ++i) {
        if (sys.constraints.indicator[static_cast<std::size_t>(i)]) {
            masked_u.row(i).setZero();
        } else {
            masked_c.row(i).setZero();
        }
    }
    return -sys.op->apply_transpose(masked_c) / sys.mu + apply_markov_transpose(sys.markov, masked_u);
}

/// Outcome of a fixed-point solve. residual_history[t] is the Frobenius
/// norm of the iterate update at step t; z_star_norm is ||Z*||_F, the rho
/// of the geometric rate bound.
struct EquilibriumResult {
    Matrix z_star;
    int iterations = 0;
    std::vector<double> residual_history;
    bool converged = false;
    double z_star_norm = 0.0;
};

namespace detail {

template <typename Step>
EquilibriumResult iterate_fixed_point(Matrix z, Step step, double tol, int max_iter) {
    EquilibriumResult res;
    for (int t = 1; t <= max_iter; ++t) {
        Matrix z_next = step(z);
        if (!z_next.allFinite()) {
            throw NumericError("fixed-point iteration produced non-finite values at iterate " +
                               std::to_string(t));
        }
        const double resid = (z_next - z).norm();
        res.residual_history.push_back(resid);
        res.iterations = t;
        z = std::move(z_next);
        if (resid <= tol) {
            res.converged = true;
            break;
        }
    }
    res.z_star = std::move(z);
    res.z_star_norm = res.z_star.norm();
    return res;
}

}  // namespace detail

/// Iterates Z <- X - (1/mu) L Z from Z = 0 until the Frobenius update drops
/// below tol. Converges geometrically at rate lambda_max/mu when mu exceeds
/// lambda_max; callers exploring divergence get converged=false (or a
/// NumericError once iterates leave the finite range).
inline EquilibriumResult solve_implicit_layer(const LaplacianOperator& op, const Matrix& x_tilde,
                                              double mu, double tol = 1e-6, int max_iter = 100) {
    if (x_tilde.rows() != op.graph().num_nodes()) {
        throw ShapeError("solve_implicit_layer: one feature row per node required");
    }
    if (!(mu > 0.0)) throw InvalidArgument("solve_implicit_layer: mu must be positive");
    Matrix z0 = Matrix::Zero(x_tilde.rows(), x_tilde.cols());
    return detail::iterate_fixed_point(
        std::move(z0), [&](const Matrix& z) -> Matrix { return x_tilde - op.apply(z) / mu; }, tol,
        max_iter);
}

/// Dense oracle: solves (I + L/mu) Z = X by LU factorization.
inline Matrix solve_direct(const LaplacianOperator& op, const Matrix& x_tilde, double mu,
                           int dense_cap = 2000) {
    const int n = op.graph().num_nodes();
    if (x_tilde.rows() != n) throw ShapeError("solve_direct: one feature row per node required");
    if (n > dense_cap) {
        throw DomainError("solve_direct: graph exceeds dense cap (" + std::to_string(n) + ")");
    }
    Matrix system = op.to_dense(dense_cap) / mu;
    system += Matrix::Identity(n, n);
    Eigen::FullPivLU<Matrix> lu(system);
    if (!lu.isInvertible()) {
        throw DomainError("solve_direct: singular system (mu must exceed lambda_max)");
    }
    return lu.solve(x_tilde);
}

/// Iterates f <- Y' + C f. The solution is unique and independent of f0
/// when the largest singular value of C is below one; bipartite
/// unconstrained systems oscillate and are reported as converged=false.
inline EquilibriumResult solve_constrained(const ConstrainedSystem& sys, double tol = 1e-6,
                                           int max_iter = 100, const Matrix* f0 = nullptr) {
    const int n = sys.op->graph().num_nodes();
    const Eigen::Index c = sys.constraints.padded_targets.cols();
    Matrix f = (f0 != nullptr) ? *f0 : Matrix::Zero(n, c);
    if (f.rows() != n || f.cols() != c) {
        throw ShapeError("solve_constrained: initial state must be N x c");
    }
    return detail::iterate_fixed_point(
        std::move(f),
        [&](const Matrix& cur) -> Matrix {
            return sys.constraints.padded_targets + apply_system(sys, cur);
        },
        tol, max_iter);
}

/// Power-iteration estimate of the largest singular value of C (on C^T C,
/// matrix-free). Advisory: the uniqueness guarantee needs the true value
/// below one.
inline double estimate_gamma_max(const ConstrainedSystem& sys, int iters = 50,
                                 std::uint64_t seed = 0) {
    const int n = sys.op->graph().num_nodes();
    Rng rng(seed);
    Matrix v(n, 1);
    for (int i = 0; i < n; ++i) v(i, 0) = rng.uniform(-1.0, 1.0);
    v /= v.norm();
    double sigma2 = 0.0;
    for (int it = 0; it < iters; ++it) {
        Matrix u = apply_system_transpose(sys, apply_system(sys, v));
        sigma2 = (v.array() * u.array()).sum();
        const double norm = u.norm();
        if (norm <= 1e-300) return 0.0;
        v = u / norm;
    }
    return std::sqrt(std::max(0.0, sigma2));
}

}  // namespace dignn
