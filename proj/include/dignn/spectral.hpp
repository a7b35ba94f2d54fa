#pragma once

#include <cmath>
#include <cstdint>

#include "dignn/laplacian.hpp"
#include "dignn/rng.hpp"
#include "dignn/types.hpp"

namespace dignn {

struct PowerIterationResult {
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Dominant-eigenvalue estimate by plain power iteration v <- Lv with
/// normalization, valid because every kind is PSD in its own inner
/// product. The Rayleigh quotient is taken in that inner product (weights
/// from vertex_weights_for_energy), which makes the estimate a lower bound
/// on the true lambda_max. Deterministic under the seed; when the
/// iteration cap is hit the best estimate is returned with
/// converged=false.
inline PowerIterationResult lambda_max(const LaplacianOperator& op, double tol = 1e-10,
                                       int max_iter = 10000, std::uint64_t seed = 0) {
    const int n = op.graph().num_nodes();
    Rng rng(seed);
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
    v.normalize();
    const Vector w = op.vertex_weights_for_energy();

    PowerIterationResult res;
    double prev = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        Vector lv = op.apply(v);
        const double denom = (v.array() * v.array() * w.array()).sum();
        const double rayleigh = (v.array() * lv.array() * w.array()).sum() / denom;
        res.value = rayleigh;
        res.iterations = it;
        const double norm = lv.norm();
        if (norm <= 1e-300) {
            // Operator annihilates the iterate (edgeless graph or kernel hit).
            res.value = 0.0;
            res.converged = true;
            return res;
        }
        if (it > 1 && std::abs(rayleigh - prev) <= tol * std::max(1.0, std::abs(rayleigh))) {
            res.converged = true;
            return res;
        }
        prev = rayleigh;
        v = lv / norm;
    }
    return res;
}

/// Largest singular value of a dense parameter matrix via power iteration
/// on T^T T. Used by the bound-monitoring hook.
inline double spectral_norm_estimate(const Matrix& theta, int iters = 200, std::uint64_t seed = 0) {
    if (theta.size() == 0) return 0.0;
    Rng rng(seed);
    Vector v(theta.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1.0, 1.0);
    v.normalize();
    double sigma2 = 0.0;
    for (int it = 0; it < iters; ++it) {
        Vector u = theta.transpose() * (theta * v);
        sigma2 = v.dot(u);
        const double norm = u.norm();
        if (norm <= 1e-300) return 0.0;
        v = u / norm;
    }
    return std::sqrt(std::max(0.0, sigma2));
}

/// Analytic eigenvalue range bound for the parameterized operator:
/// 2 B^3 beta cosh(B beta).
inline double spectral_bound(const GeometryParams& p) {
    const double B = p.norm_bound_B;
    const double beta = p.embed_bound_beta;
    return 2.0 * B * B * B * beta * std::cosh(B * beta);
}

inline double spectral_bound(double B, double beta) {
    return 2.0 * B * B * B * beta * std::cosh(B * beta);
}

/// Well-posedness certificate for the implicit layer z = x - (1/mu) L z.
struct WellPosednessReport {
    double lambda_max_estimate = 0.0;
    double analytic_bound = 0.0;
    double mu = 0.0;
    bool well_posed = false;
    double margin = 0.0;
};

/// Estimates lambda_max and reports whether mu exceeds it. The analytic
/// bound column is 2 for the random-walk kind, the closed-form spectral
/// bound for the parameterized kind when its parameters are supplied, and
/// the estimate itself otherwise.
inline WellPosednessReport certify(const LaplacianOperator& op, double mu,
                                   const GeometryParams* p = nullptr) {
    WellPosednessReport rep;
    rep.mu = mu;
    rep.lambda_max_estimate = lambda_max(op).value;
    if (op.kind() == LaplacianKind::RandomWalk) {
        rep.analytic_bound = 2.0;
    } else if (op.kind() == LaplacianKind::Parameterized && p != nullptr) {
        rep.analytic_bound = spectral_bound(*p);
    } else {
        rep.analytic_bound = rep.lambda_max_estimate;
    }
    rep.well_posed = mu > rep.lambda_max_estimate;
    rep.margin = mu - rep.lambda_max_estimate;
    return rep;
}

}  // namespace dignn
