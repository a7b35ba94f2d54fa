#include <catch2/catch_amalgamated.hpp>

#include "dignn/equilibrium.hpp"
#include "dignn/spectral.hpp"
#include "helpers.hpp"

using namespace dignn;

namespace {

Graph k2() { return build_graph(2, std::vector<WeightedEdge>{{0, 1}}); }
Graph triangle() { return build_graph(3, std::vector<WeightedEdge>{{0, 1}, {1, 2}, {0, 2}}); }

}  // namespace

TEST_CASE("implicit layer on an edgeless graph returns the input") {
    const Graph g = build_graph(4, std::vector<WeightedEdge>{});
    const LaplacianOperator op = build_canonical(g, LaplacianKind::Unnormalized);
    Rng rng(1);
    const Matrix x = testutil::random_matrix(rng, 4, 3);
    const EquilibriumResult res = solve_implicit_layer(op, x, 2.5);
    CHECK(res.converged);
    // The first iterate is already the fixed point; one more application
    // certifies it with a zero update.
    CHECK(res.iterations <= 2);
    CHECK(res.z_star.isApprox(x));
}

TEST_CASE("K2 random walk equilibrium hits the closed-form solution") {
    const Graph g = k2();
    const LaplacianOperator rw = build_canonical(g, LaplacianKind::RandomWalk);
    Matrix x(2, 1);
    x << 1, 0;
    const EquilibriumResult res = solve_implicit_layer(rw, x, 2.5, 1e-12, 1000);
    REQUIRE(res.converged);
    CHECK(res.z_star(0, 0) == Catch::Approx(7.0 / 9.0).epsilon(1e-9));
    CHECK(res.z_star(1, 0) == Catch::Approx(2.0 / 9.0).epsilon(1e-9));

    const Matrix direct = solve_direct(rw, x, 2.5);
    CHECK(direct(0, 0) == Catch::Approx(7.0 / 9.0).epsilon(1e-12));
    CHECK(direct(1, 0) == Catch::Approx(2.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("solve_direct basics") {
    const Graph g = k2();
    const LaplacianOperator rw = build_canonical(g, LaplacianKind::RandomWalk);
    CHECK(solve_direct(rw, Matrix::Zero(2, 3), 2.5).isZero(0.0));
    CHECK_THROWS_AS(solve_direct(rw, Matrix::Zero(2, 1), 2.5, 1), DomainError);
}

TEST_CASE("fixed point agrees with the dense oracle on random well-posed instances") {
    Rng rng(31);
    for (int rep = 0; rep < 25; ++rep) {
        const int n = 4 + rng.uniform_int(60);
        const Graph g = testutil::random_connected_graph(rng, n, 0.2);
        const LaplacianKind kind = (rep % 2 == 0) ? LaplacianKind::RandomWalk
                                                  : LaplacianKind::Unnormalized;
        const LaplacianOperator op = build_canonical(g, kind);
        const double mu = 1.8 * testutil::dense_lambda_max(op) + 0.5;
        const Matrix x = testutil::random_matrix(rng, n, 3);
        const EquilibriumResult res = solve_implicit_layer(op, x, mu, 1e-10, 2000);
        REQUIRE(res.converged);
        CHECK((res.z_star - solve_direct(op, x, mu)).norm() <= 1e-8);
    }
}

TEST_CASE("geometric rate bound against the direct solution") {
    Rng rng(32);
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 5 + rng.uniform_int(25);
        const Graph g = testutil::random_connected_graph(rng, n, 0.25);
        const LaplacianOperator op = build_canonical(g, LaplacianKind::RandomWalk);
        const double lam = testutil::dense_lambda_max(op);
        const double mu = 4.0;
        const Matrix x = testutil::random_matrix(rng, n, 2);
        const Matrix z_star = solve_direct(op, x, mu);
        const double rho = z_star.norm();

        Matrix z = Matrix::Zero(n, 2);
        double prev_err = rho;
        for (int t = 1; t <= 50; ++t) {
            z = x - op.apply(z) / mu;
            const double err = (z - z_star).norm();
            CHECK(err <= rho * std::pow(lam / mu, t) + 1e-12);
            // mu = 4 with the random-walk kind halves the error every step.
            CHECK(err <= 0.5 * prev_err + 1e-15);
            prev_err = err;
        }
    }
}

TEST_CASE("markov matrix construction and stationary distribution") {
    const Graph g = k2();
    const LaplacianOperator op = build_canonical(g, LaplacianKind::RandomWalk);
    const MarkovMatrix mm = build_markov(op);
    CHECK(mm.p[0] == 1.0);
    CHECK(mm.p[1] == 1.0);
    Vector pi = stationary_distribution(mm);
    CHECK(pi[0] == 0.5);
    CHECK(pi[1] == 0.5);

    const Graph tri = triangle();
    const MarkovMatrix mt = build_markov(build_canonical(tri, LaplacianKind::Unnormalized));
    for (int a = 0; a < tri.num_arcs(); ++a) CHECK(mt.p[a] == 0.5);
    CHECK(stationary_distribution(mt).isApproxToConstant(1.0 / 3.0));

    const Graph tp = build_graph(4, std::vector<WeightedEdge>{{0, 1}, {1, 2}, {0, 2}, {0, 3}});
    const MarkovMatrix mtp = build_markov(build_canonical(tp, LaplacianKind::Unnormalized));
    Vector pi_tp = stationary_distribution(mtp);
    Vector expect(4);
    expect << 3.0 / 8.0, 0.25, 0.25, 1.0 / 8.0;
    CHECK(pi_tp.isApprox(expect));

    const Graph iso = build_graph(3, std::vector<WeightedEdge>{{0, 1}});
    CHECK_THROWS_AS(build_markov(build_canonical(iso, LaplacianKind::Unnormalized)), DomainError);
}

TEST_CASE("markov rows sum to one and pi is stationary on random kernels") {
    Rng rng(33);
    for (int rep = 0; rep < 15; ++rep) {
        const int n = 3 + rng.uniform_int(25);
        const Graph g = testutil::random_connected_graph(rng, n, 0.3);
        const EdgeKernel k = testutil::random_edge_kernel(rng, g);
        const VertexMeasure m = make_vertex_measure(testutil::random_positive_vector(rng, n));
        const LaplacianOperator op = build_from_geometry(g, m, k);
        const MarkovMatrix mm = build_markov(op);
        for (int i = 0; i < n; ++i) {
            double sum = 0.0;
            for (int a = g.arc_begin(i); a < g.arc_end(i); ++a) sum += mm.p[a];
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
        const Vector pi = stationary_distribution(mm);
        const Vector pi_p = apply_markov_transpose(mm, pi);
        CHECK((pi_p - pi).cwiseAbs().maxCoeff() <= 1e-12);
        // Power-iteration oracle on P^T confirms the stationary vector.
        if (!is_bipartite(g)) {
            Vector v = Vector::Constant(n, 1.0 / n);
            for (int t = 0; t < 4000; ++t) v = apply_markov_transpose(mm, v);
            CHECK((v - pi).cwiseAbs().maxCoeff() <= 1e-8);
        }
    }
}

TEST_CASE("constraint set construction") {
    Matrix targets(2, 2);
    targets << 1, 2, 3, 4;
    const ConstraintSet cs = make_constraint_set(4, {1, 3}, targets);
    CHECK(cs.indicator == std::vector<std::uint8_t>{0, 1, 0, 1});
    CHECK(cs.padded_targets.row(1).isApprox(targets.row(0)));
    CHECK(cs.padded_targets.row(0).isZero(0.0));

    CHECK_THROWS_AS(make_constraint_set(4, {1, 1}, targets), InvalidArgument);
    CHECK_THROWS_AS(make_constraint_set(4, {1, 8}, targets), InvalidArgument);
    CHECK_THROWS_AS(make_constraint_set(4, {1}, targets), ShapeError);
}

TEST_CASE("fully constrained system reduces to the implicit layer") {
    Rng rng(34);
    const int n = 12;
    const Graph g = testutil::random_connected_graph(rng, n, 0.3);
    const LaplacianOperator op = build_canonical(g, LaplacianKind::RandomWalk);
    const MarkovMatrix mm = build_markov(op);
    const Matrix x = testutil::random_matrix(rng, n, 2);
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    const ConstrainedSystem sys =
        build_constrained_system(op, mm, make_constraint_set(n, all, x), 2.5);

    const EquilibriumResult a = solve_constrained(sys, 1e-10, 2000);
    const EquilibriumResult b = solve_implicit_layer(op, x, 2.5, 1e-10, 2000);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    CHECK((a.z_star - b.z_star).cwiseAbs().maxCoeff() <= 1e-9);

    // The row-mixed operator with every node constrained is exactly -(1/mu) L.
    const Matrix f = testutil::random_matrix(rng, n, 2);
    CHECK((apply_system(sys, f) + op.apply(f) / 2.5).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("unconstrained system is the diffusion matrix") {
    Rng rng(35);
    const int n = 9;
    const Graph g = testutil::random_connected_graph(rng, n, 0.3);
    const LaplacianOperator op = build_canonical(g, LaplacianKind::Unnormalized);
    const MarkovMatrix mm = build_markov(op);
    const ConstrainedSystem sys =
        build_constrained_system(op, mm, make_constraint_set(n, {}, Matrix::Zero(0, 2)), 2.5);
    const Matrix f = testutil::random_matrix(rng, n, 2);
    CHECK((apply_system(sys, f) - apply_markov(mm, f)).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(sys.constraints.padded_targets.isZero(0.0));
}

TEST_CASE("mixed system dispatches rows by the indicator") {
    const Graph g = k2();
    const LaplacianOperator op = build_canonical(g, LaplacianKind::RandomWalk);
    const MarkovMatrix mm = build_markov(op);
    Matrix y(1, 1);
    y << 1.0;
    const double mu = 2.5;
    const ConstrainedSystem sys =
        build_constrained_system(op, mm, make_constraint_set(2, {0}, y), mu);

    // Dense assembly: row 0 is -(1/mu) L_0, row 1 is P_1.
    Matrix dense(2, 2);
    const Matrix lap = op.to_dense();
    dense.row(0) = -lap.row(0) / mu;
    dense.row(1) << 1.0, 0.0;
    Rng rng(36);
    const Matrix f = testutil::random_matrix(rng, 2, 1);
    CHECK((apply_system(sys, f) - dense * f).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((apply_system_transpose(sys, f) - dense.transpose() * f).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("constrained equilibria are independent of the initial state") {
    Rng rng(37);
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 6 + rng.uniform_int(20);
        const Graph g = testutil::random_connected_graph(rng, n, 0.3);
        const LaplacianOperator op = build_canonical(g, LaplacianKind::RandomWalk);
        const MarkovMatrix mm = build_markov(op);
        std::vector<int> nodes;
        for (int i = 0; i < n; ++i) {
            if (rng.uniform() < 0.4) nodes.push_back(i);
        }
        if (nodes.empty()) nodes.push_back(0);
        const Matrix targets = testutil::random_matrix(rng, static_cast<int>(nodes.size()), 2);
        const ConstrainedSystem sys =
            build_constrained_system(op, mm, make_constraint_set(n, nodes, targets), 3.0);

        // Each solve stops within gamma/(1-gamma) * solve_tol of the unique
        // equilibrium, so solving at tol/20 keeps the pair within 2*tol for
        // any contraction factor up to ~0.9.
        const double tol = 1e-9;
        const Matrix f0_a = testutil::random_matrix(rng, n, 2);
        const Matrix f0_b = testutil::random_matrix(rng, n, 2);
        const EquilibriumResult ra = solve_constrained(sys, tol / 20, 5000, &f0_a);
        const EquilibriumResult rb = solve_constrained(sys, tol / 20, 5000, &f0_b);
        REQUIRE(ra.converged);
        REQUIRE(rb.converged);
        CHECK((ra.z_star - rb.z_star).norm() <= 2 * tol);
    }
}

TEST_CASE("bipartite unconstrained iteration oscillates and reports non-convergence") {
    const Graph path = build_graph(3, std::vector<WeightedEdge>{{0, 1}, {1, 2}});
    const LaplacianOperator op = build_canonical(path, LaplacianKind::Unnormalized);
    const MarkovMatrix mm = build_markov(op);
    const ConstrainedSystem sys =
        build_constrained_system(op, mm, make_constraint_set(3, {}, Matrix::Zero(0, 1)), 2.5);
    Matrix f0(3, 1);
    f0 << 1, 0, 0;
    const EquilibriumResult res = solve_constrained(sys, 1e-8, 200, &f0);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 200);
    // Period-2 oscillation: the update never decays.
    CHECK(res.residual_history.back() > 0.1);
}

TEST_CASE("divergent iteration with non-finite values raises") {
    const Graph g = k2();
    const LaplacianOperator op = build_canonical(g, LaplacianKind::Unnormalized);
    Matrix x(2, 1);
    x << 1, -1;
    CHECK_THROWS_AS(solve_implicit_layer(op, x, 1e-4, 1e-12, 100000), NumericError);
}

TEST_CASE("gamma estimate tracks the largest singular value of C") {
    Rng rng(38);
    const int n = 10;
    const Graph g = testutil::random_connected_graph(rng, n, 0.3);
    const LaplacianOperator op = build_canonical(g, LaplacianKind::RandomWalk);
    const MarkovMatrix mm = build_markov(op);
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    const double mu = 3.0;
    const ConstrainedSystem sys =
        build_constrained_system(op, mm, make_constraint_set(n, all, Matrix::Zero(n, 1)), mu);
    // Dense C is -(1/mu) L for the fully constrained case.
    const Matrix c = -op.to_dense() / mu;
    const double exact = c.jacobiSvd().singularValues()(0);
    CHECK(estimate_gamma_max(sys, 300) == Catch::Approx(exact).epsilon(1e-6));
}

TEST_CASE("residual history contract") {
    const Graph g = k2();
    const LaplacianOperator rw = build_canonical(g, LaplacianKind::RandomWalk);
    Matrix x(2, 1);
    x << 1, 0;
    const EquilibriumResult res = solve_implicit_layer(rw, x, 2.5, 1e-10, 500);
    REQUIRE(res.converged);
    REQUIRE_FALSE(res.residual_history.empty());
    CHECK(res.residual_history.back() <= 1e-10);
    CHECK(res.z_star_norm == Catch::Approx(res.z_star.norm()));
    CHECK(static_cast<int>(res.residual_history.size()) == res.iterations);
}
