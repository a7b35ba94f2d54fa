#include <catch2/catch_amalgamated.hpp>

#include "dignn/spectral.hpp"
#include "helpers.hpp"

using namespace dignn;

TEST_CASE("lambda_max on hand instances") {
    const Graph k2 = build_graph(2, std::vector<WeightedEdge>{{0, 1}});
    CHECK(lambda_max(build_canonical(k2, LaplacianKind::Unnormalized)).value ==
          Catch::Approx(2.0).epsilon(1e-9));
    CHECK(lambda_max(build_canonical(k2, LaplacianKind::RandomWalk)).value ==
          Catch::Approx(2.0).epsilon(1e-9));

    const Graph tri = build_graph(3, std::vector<WeightedEdge>{{0, 1}, {1, 2}, {0, 2}});
    CHECK(lambda_max(build_canonical(tri, LaplacianKind::Unnormalized)).value ==
          Catch::Approx(3.0).epsilon(1e-9));

    const Graph empty = build_graph(3, std::vector<WeightedEdge>{});
    const PowerIterationResult res = lambda_max(build_canonical(empty, LaplacianKind::Unnormalized));
    CHECK(res.value == 0.0);
    CHECK(res.converged);
}

TEST_CASE("power iteration matches dense eigensolve") {
    Rng rng(21);
    for (int rep = 0; rep < 12; ++rep) {
        const int n = 4 + rng.uniform_int(96);
        const Graph g = testutil::random_connected_graph(rng, n, 0.15);
        const Matrix X = testutil::random_matrix(rng, n, 3);
        const GeometryParams params = testutil::random_geometry(rng, 3);
        std::vector<LaplacianOperator> ops;
        ops.push_back(build_canonical(g, LaplacianKind::Unnormalized));
        ops.push_back(build_canonical(g, LaplacianKind::RandomWalk));
        ops.push_back(build_canonical(g, LaplacianKind::Normalized));
        ops.push_back(build_parameterized(g, X, params));
        for (const LaplacianOperator& op : ops) {
            const double exact = testutil::dense_lambda_max(op);
            const PowerIterationResult est = lambda_max(op, 1e-12, 20000, 77);
            CHECK(std::abs(est.value - exact) <= 1e-6 * std::max(1.0, std::abs(exact)));
            CHECK(est.value >= -1e-10);
        }
    }
}

TEST_CASE("spectral_bound closed form") {
    CHECK(spectral_bound(1.0, 1.0) == Catch::Approx(2.0 * std::cosh(1.0)).epsilon(1e-12));
    CHECK(spectral_bound(1e-9, 1.0) < 1e-8);
    CHECK(spectral_bound(1.0, 0.5) == Catch::Approx(std::cosh(0.5)).epsilon(1e-12));
    GeometryParams p;
    p.theta_chi = Matrix::Ones(1, 1);
    p.theta_phi = Matrix::Ones(1, 1);
    p.theta_varphi = Matrix::Ones(1, 1);
    p.norm_bound_B = 1.0;
    p.embed_bound_beta = 1.0;
    CHECK(spectral_bound(p) == Catch::Approx(3.0861612696304874).epsilon(1e-12));
}

TEST_CASE("theorem bound holds for norm-constrained random draws") {
    Rng rng(22);
    for (int rep = 0; rep < 30; ++rep) {
        const int n = 4 + rng.uniform_int(20);
        const int d = 2 + rng.uniform_int(3);
        const Graph g = testutil::random_connected_graph(rng, n, 0.3);
        const double B = rng.uniform(0.3, 1.5);
        const double beta = rng.uniform(0.3, 1.5);
        GeometryParams p = testutil::random_geometry(rng, d);
        // Rescale parameters and features to meet the bound's hypotheses.
        p.theta_chi *= B / std::max(1e-12, spectral_norm_estimate(p.theta_chi));
        p.theta_phi *= B / std::max(1e-12, spectral_norm_estimate(p.theta_phi));
        p.norm_bound_B = B;
        p.embed_bound_beta = beta;
        Matrix X = testutil::random_matrix(rng, n, d);
        for (int i = 0; i < n; ++i) {
            const double norm = X.row(i).norm();
            if (norm > 0) X.row(i) *= beta * rng.uniform(0.3, 1.0) / norm;
        }
        const LaplacianOperator op = build_parameterized(g, X, p);
        CHECK(testutil::dense_lambda_max(op) <= spectral_bound(B, beta) + 1e-8);
    }
}

TEST_CASE("spectral norm estimate matches Eigen SVD") {
    Rng rng(23);
    for (int rep = 0; rep < 10; ++rep) {
        const Matrix m = testutil::random_matrix(rng, 2 + rng.uniform_int(6), 2 + rng.uniform_int(6));
        const double exact = m.jacobiSvd().singularValues()(0);
        CHECK(spectral_norm_estimate(m, 500) == Catch::Approx(exact).epsilon(1e-8));
    }
    CHECK(spectral_norm_estimate(Matrix::Zero(3, 3)) == 0.0);
}

TEST_CASE("certify reports well-posedness") {
    const Graph k2 = build_graph(2, std::vector<WeightedEdge>{{0, 1}});
    const LaplacianOperator rw = build_canonical(k2, LaplacianKind::RandomWalk);

    const WellPosednessReport bad = certify(rw, 1.5);
    CHECK_FALSE(bad.well_posed);
    CHECK(bad.analytic_bound == 2.0);

    const WellPosednessReport good = certify(rw, 2.5);
    CHECK(good.well_posed);
    CHECK(good.margin >= 0.5 - 1e-9);

    const LaplacianOperator un = build_canonical(k2, LaplacianKind::Unnormalized);
    const WellPosednessReport r = certify(un, 3.0);
    CHECK(r.well_posed);
    CHECK(r.lambda_max_estimate == Catch::Approx(2.0).epsilon(1e-9));

    GeometryParams p;
    p.theta_chi = Matrix::Ones(1, 1);
    p.theta_phi = Matrix::Ones(1, 1);
    p.theta_varphi = Matrix::Ones(1, 1);
    Matrix X(2, 1);
    X << 0.5, -0.5;
    const LaplacianOperator param = build_parameterized(k2, X, p);
    const WellPosednessReport pr = certify(param, 2.5, &p);
    CHECK(pr.analytic_bound == Catch::Approx(spectral_bound(p)).epsilon(1e-12));
}
