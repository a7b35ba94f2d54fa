#pragma once

#include <cmath>
#include <ostream>
#include <vector>

#include "dignn/equilibrium.hpp"
#include "dignn/laplacian.hpp"
#include "dignn/types.hpp"

namespace dignn {

/// Outcome of the training-time over-smoothing check: two constrained
/// solves started from different feature matrices, and how far their
/// equilibria ended up apart.
struct OstReport {
    Matrix equilibrium_a;
    Matrix equilibrium_b;
    double max_abs_difference = 0.0;
    bool feature_independent = false;
    bool converged_a = false;
    bool converged_b = false;
};

namespace detail {

inline OstReport compare_constrained_solves(const ConstrainedSystem& sys_a,
                                            const ConstrainedSystem& sys_b, const Matrix& f0_a,
                                            const Matrix& f0_b, double tol, int max_iter) {
    // Solve tighter than the reported threshold so fixed-point truncation
    // (up to gamma/(1-gamma) times the last update) cannot push two solves
    // of the same system past the 2*tol independence bound.
    const double solve_tol = tol / 20.0;
    EquilibriumResult ra = solve_constrained(sys_a, solve_tol, max_iter, &f0_a);
    EquilibriumResult rb = solve_constrained(sys_b, solve_tol, max_iter, &f0_b);
    OstReport rep;
    rep.max_abs_difference = (ra.z_star - rb.z_star).cwiseAbs().maxCoeff();
    rep.feature_independent = rep.max_abs_difference <= 2.0 * tol;
    rep.converged_a = ra.converged;
    rep.converged_b = rb.converged;
    rep.equilibrium_a = std::move(ra.z_star);
    rep.equilibrium_b = std::move(rb.z_star);
    return rep;
}

}  // namespace detail

/// With a fixed (feature-independent) Laplacian the constrained equilibrium
/// depends only on the targets and the operator, so re-solving with initial
/// states taken from two different feature matrices must land on the same
/// point. The initial state is the feature matrix itself.
inline OstReport check_ost(const Graph& g, LaplacianKind kind, const ConstraintSet& cs,
                           const Matrix& X_a, const Matrix& X_b, double mu, double tol = 1e-6,
                           int max_iter = 2000) {
    if (kind == LaplacianKind::Parameterized) {
        throw InvalidArgument("check_ost: fixed canonical kind required (use check_ost_parameterized)");
    }
    if (X_a.rows() != g.num_nodes() || X_b.rows() != g.num_nodes() ||
        X_a.cols() != cs.padded_targets.cols() || X_b.cols() != cs.padded_targets.cols()) {
        throw ShapeError("check_ost: feature matrices must be N x c to serve as initial states");
    }
    const LaplacianOperator op = build_canonical(g, kind);
    const MarkovMatrix mm = build_markov(op);
    const ConstrainedSystem sys = build_constrained_system(op, mm, cs, mu);
    return detail::compare_constrained_solves(sys, sys, X_a, X_b, tol, max_iter);
}

/// The feature-adaptive counterpart: the geometry (and hence the operator)
/// is rebuilt from each feature matrix, so the two equilibria differ in
/// general. This is the mitigation route for training-time over-smoothing.
inline OstReport check_ost_parameterized(const Graph& g, const GeometryParams& params,
                                         const ConstraintSet& cs, const Matrix& X_a,
                                         const Matrix& X_b, double mu, double tol = 1e-6,
                                         int max_iter = 2000) {
    if (X_a.rows() != g.num_nodes() || X_b.rows() != g.num_nodes() ||
        X_a.cols() != cs.padded_targets.cols() || X_b.cols() != cs.padded_targets.cols()) {
        throw ShapeError("check_ost_parameterized: feature matrices must be N x c");
    }
    const LaplacianOperator op_a = build_parameterized(g, X_a, params);
    const LaplacianOperator op_b = build_parameterized(g, X_b, params);
    const ConstrainedSystem sys_a = build_constrained_system(op_a, build_markov(op_a), cs, mu);
    const ConstrainedSystem sys_b = build_constrained_system(op_b, build_markov(op_b), cs, mu);
    return detail::compare_constrained_solves(sys_a, sys_b, X_a, X_b, tol, max_iter);
}

/// Inference-time over-smoothing: with no constrained nodes the iteration
/// f <- P f drives every row to the same limit (pi f0)^T.
struct OsiReport {
    Matrix limit_rows;
    Vector predicted_row;  // (pi f0)^T
    double max_row_deviation = 0.0;
    bool rows_identical = false;
    int iterations = 0;
};

inline OsiReport check_osi(const MarkovMatrix& mm, const Matrix& f0, double tol = 1e-6,
                           int max_iter = 100000, double row_tol = 1e-6) {
    const Graph& g = *mm.graph;
    if (f0.rows() != g.num_nodes()) throw ShapeError("check_osi: one row per node required");
    if (!is_connected(g)) {
        throw DomainError("check_osi: graph is disconnected; the diffusion limit requires an "
                          "irreducible chain (connected graph)");
    }
    if (is_bipartite(g)) {
        throw DomainError("check_osi: graph is bipartite; the diffusion limit requires an "
                          "aperiodic chain (connected non-bipartite graph)");
    }
    Matrix f = f0;
    OsiReport rep;
    for (int t = 1; t <= max_iter; ++t) {
        Matrix next = apply_markov(mm, f);
        const double resid = (next - f).norm();
        f = std::move(next);
        rep.iterations = t;
        if (resid <= tol) break;
    }
    rep.predicted_row = (stationary_distribution(mm).transpose() * f0).transpose();
    rep.max_row_deviation = 0.0;
    for (int i = 0; i < g.num_nodes(); ++i) {
        rep.max_row_deviation = std::max(
            rep.max_row_deviation, (f.row(i).transpose() - rep.predicted_row).cwiseAbs().maxCoeff());
    }
    rep.rows_identical = rep.max_row_deviation <= row_tol;
    rep.limit_rows = std::move(f);
    return rep;
}

/// One record per diffusion step: Dirichlet energy of the iterate under the
/// unnormalized operator and the across-row variance (mean squared
/// deviation of rows from the mean row).
struct TrajectoryPoint {
    int step = 0;
    double energy = 0.0;
    double row_variance = 0.0;
};

inline double row_variance(const Matrix& f) {
    const Eigen::RowVectorXd mean = f.colwise().mean();
    return (f.rowwise() - mean).squaredNorm() / static_cast<double>(f.rows());
}

inline std::vector<TrajectoryPoint> smoothing_trajectory(const MarkovMatrix& mm, const Matrix& f0,
                                                         int steps) {
    if (steps < 1) throw InvalidArgument("smoothing_trajectory: steps must be >= 1");
    const Graph& g = *mm.graph;
    if (f0.rows() != g.num_nodes()) throw ShapeError("smoothing_trajectory: one row per node required");
    const LaplacianOperator un = build_canonical(g, LaplacianKind::Unnormalized);
    std::vector<TrajectoryPoint> series;
    series.reserve(static_cast<std::size_t>(steps) + 1);
    Matrix f = f0;
    for (int t = 0; t <= steps; ++t) {
        series.push_back({t, un.dirichlet_energy(f), row_variance(f)});
        if (t < steps) f = apply_markov(mm, f);
    }
    return series;
}

inline void write_trajectory_csv(const std::vector<TrajectoryPoint>& series, std::ostream& out) {
    out << "step,energy,variance\n";
    for (const TrajectoryPoint& pt : series) {
        out << pt.step << ',' << format_double(pt.energy) << ',' << format_double(pt.row_variance)
            << '\n';
    }
}

}  // namespace dignn
