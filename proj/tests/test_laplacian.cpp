#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "dignn/laplacian.hpp"
#include "helpers.hpp"

using namespace dignn;

namespace {

Graph k2() { return build_graph(2, std::vector<WeightedEdge>{{0, 1}}); }
Graph path3() { return build_graph(3, std::vector<WeightedEdge>{{0, 1}, {1, 2}}); }

}  // namespace

TEST_CASE("canonical operators on hand instances") {
    const Graph g2 = k2();
    Matrix f(2, 1);
    f << 1, 0;

    const LaplacianOperator un = build_canonical(g2, LaplacianKind::Unnormalized);
    Matrix expect(2, 1);
    expect << 1, -1;
    CHECK(un.apply(f).isApprox(expect));

    const LaplacianOperator rw = build_canonical(g2, LaplacianKind::RandomWalk);
    CHECK(rw.apply(f).isApprox(expect));

    const Graph p3 = path3();
    Matrix f3(3, 1);
    f3 << 0, 1, 0;
    const LaplacianOperator un3 = build_canonical(p3, LaplacianKind::Unnormalized);
    Matrix expect3(3, 1);
    expect3 << -1, 2, -1;
    CHECK(un3.apply(f3).isApprox(expect3));
}

TEST_CASE("constants lie in the kernel of every kind") {
    Rng rng(5);
    const Graph g = testutil::random_connected_graph(rng, 17, 0.25);
    const Matrix c = Matrix::Constant(17, 2, 3.7);
    for (LaplacianKind kind :
         {LaplacianKind::Unnormalized, LaplacianKind::RandomWalk, LaplacianKind::Normalized}) {
        const LaplacianOperator op = build_canonical(g, kind);
        if (kind == LaplacianKind::Normalized) {
            // The kernel of the normalized kind is sqrt(D), not constants.
            Matrix sd = degrees(g).array().sqrt().matrix().replicate(1, 2);
            CHECK(op.apply(sd).cwiseAbs().maxCoeff() < 1e-12);
        } else {
            CHECK(op.apply(c).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    const Matrix X = testutil::random_matrix(rng, 17, 4);
    const GeometryParams params = testutil::random_geometry(rng, 4);
    const LaplacianOperator op = build_parameterized(g, X, params);
    CHECK(op.apply(c).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("random-walk rows sum to one and zero-degree nodes are rejected") {
    Rng rng(6);
    const Graph g = testutil::random_connected_graph(rng, 12, 0.3);
    const LaplacianOperator rw = build_canonical(g, LaplacianKind::RandomWalk);
    for (int i = 0; i < g.num_nodes(); ++i) {
        double sum = 0.0;
        for (int a = g.arc_begin(i); a < g.arc_end(i); ++a) sum += rw.coeff()[a];
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    const Graph iso = build_graph(3, std::vector<WeightedEdge>{{0, 1}});
    CHECK_THROWS_AS(build_canonical(iso, LaplacianKind::RandomWalk), DomainError);
    CHECK_THROWS_AS(build_canonical(iso, LaplacianKind::Normalized), DomainError);
    CHECK_NOTHROW(build_canonical(iso, LaplacianKind::Unnormalized));
}

TEST_CASE("apply agrees with dense materialization") {
    Rng rng(8);
    for (int rep = 0; rep < 8; ++rep) {
        const int n = 3 + rng.uniform_int(28);
        const Graph g = testutil::random_connected_graph(rng, n, 0.3);
        for (LaplacianKind kind :
             {LaplacianKind::Unnormalized, LaplacianKind::RandomWalk, LaplacianKind::Normalized}) {
            const LaplacianOperator op = build_canonical(g, kind);
            const Matrix dense = op.to_dense();
            for (int k = 0; k < 5; ++k) {
                const Matrix f = testutil::random_matrix(rng, n, 2);
                CHECK((op.apply(f) - dense * f).cwiseAbs().maxCoeff() < 1e-12);
            }
        }
    }
}

TEST_CASE("to_dense on K2 and cap") {
    const Graph g = k2();
    const LaplacianOperator un = build_canonical(g, LaplacianKind::Unnormalized);
    Matrix expect(2, 2);
    expect << 1, -1, -1, 1;
    CHECK(un.to_dense().isApprox(expect));
    CHECK_THROWS_AS(un.to_dense(1), DomainError);

    Rng rng(9);
    const Graph h = testutil::random_connected_graph(rng, 9, 0.4);
    const LaplacianOperator rw = build_canonical(h, LaplacianKind::RandomWalk);
    CHECK(rw.to_dense().diagonal().isApprox(Vector::Ones(9)));
}

TEST_CASE("apply_transpose matches dense transpose") {
    Rng rng(10);
    const Graph g = testutil::random_connected_graph(rng, 14, 0.3);
    const Matrix X = testutil::random_matrix(rng, 14, 3);
    const GeometryParams params = testutil::random_geometry(rng, 3);
    std::vector<LaplacianOperator> ops;
    ops.push_back(build_canonical(g, LaplacianKind::Unnormalized));
    ops.push_back(build_canonical(g, LaplacianKind::RandomWalk));
    ops.push_back(build_canonical(g, LaplacianKind::Normalized));
    ops.push_back(build_parameterized(g, X, params));
    for (const LaplacianOperator& op : ops) {
        const Matrix dense_t = op.to_dense().transpose();
        const Matrix f = testutil::random_matrix(rng, 14, 2);
        CHECK((op.apply_transpose(f) - dense_t * f).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(op.apply_transpose(Matrix::Zero(14, 2)).isZero(0.0));
    }
    // Symmetric kinds: transpose-apply is apply.
    const Matrix f = testutil::random_matrix(rng, 14, 2);
    CHECK(ops[0].apply(f).isApprox(ops[0].apply_transpose(f)));
    CHECK(ops[2].apply(f).isApprox(ops[2].apply_transpose(f)));

    // Random walk on a path: dense transpose differs from the operator.
    const Graph p3 = path3();
    const LaplacianOperator rw = build_canonical(p3, LaplacianKind::RandomWalk);
    CHECK_FALSE(rw.to_dense().isApprox(rw.to_dense().transpose()));
}

TEST_CASE("parameterized coefficients on saturated instances") {
    // Identical neighbor features: the diffusivity term saturates to 1.
    const Graph g2 = k2();
    Matrix X = Matrix::Ones(2, 1) * 1000.0;
    GeometryParams p;
    p.theta_chi = Matrix::Ones(1, 1);
    p.theta_phi = Matrix::Ones(1, 1);
    p.theta_varphi = Matrix::Ones(1, 1);
    const LaplacianOperator op = build_parameterized(g2, X, p);
    CHECK(op.param_cache()->t[0] == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(op.coeff()[0] == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(op.coeff()[1] == Catch::Approx(1.0).epsilon(1e-9));

    // Orthogonal embeddings zero out the edge measure.
    Matrix X2(2, 2);
    X2 << 1, 0, 0, 1;
    GeometryParams p2;
    p2.theta_chi = Matrix::Identity(2, 2);
    p2.theta_phi = Matrix::Identity(2, 2);
    p2.theta_varphi = Matrix::Identity(2, 2);
    const LaplacianOperator op2 = build_parameterized(g2, X2, p2);
    CHECK(op2.coeff()[0] == 0.0);
    CHECK(op2.param_cache()->zero_phi_arcs == 1);
}

TEST_CASE("saturated parameterized geometry reproduces random-walk coefficients") {
    Rng rng(12);
    const Graph g = testutil::random_connected_graph(rng, 10, 0.3);
    Matrix X(10, 1);
    for (int i = 0; i < 10; ++i) X(i, 0) = (i % 2 == 0) ? 40.0 : 55.0;  // distinct, large
    GeometryParams p;
    p.theta_chi = Matrix::Constant(1, 1, 1000.0);
    p.theta_phi = Matrix::Constant(1, 1, 1000.0);
    p.theta_varphi = Matrix::Zero(1, 1);
    const LaplacianOperator op = build_parameterized(g, X, p);
    const LaplacianOperator rw = build_canonical(g, LaplacianKind::RandomWalk);
    CHECK((op.to_dense() - rw.to_dense()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("parameterized rejects bad input") {
    const Graph g2 = k2();
    GeometryParams p;
    p.theta_chi = Matrix::Ones(1, 2);
    p.theta_phi = Matrix::Ones(1, 1);
    p.theta_varphi = Matrix::Ones(1, 2);
    Matrix X(2, 1);
    X << 1, 2;
    CHECK_THROWS_AS(build_parameterized(g2, X, p), ShapeError);

    GeometryParams ok;
    ok.theta_chi = Matrix::Ones(1, 1);
    ok.theta_phi = Matrix::Ones(1, 1);
    ok.theta_varphi = Matrix::Ones(1, 1);
    Matrix bad(2, 1);
    bad << 1.0, std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(build_parameterized(g2, bad, ok), NumericError);
}

TEST_CASE("composition: operator equals -div(grad) built from the same measures") {
    Rng rng(13);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 3 + rng.uniform_int(15);
        const Graph g = testutil::random_connected_graph(rng, n, 0.3);
        const EdgeKernel k = testutil::random_edge_kernel(rng, g);
        const VertexMeasure m = make_vertex_measure(testutil::random_positive_vector(rng, n));
        const LaplacianOperator op = build_from_geometry(g, m, k);
        const Matrix f = testutil::random_matrix(rng, n, 2);
        const Matrix composed = -graph_divergence(graph_gradient(f, g, k), g, m, k);
        CHECK((op.apply(f) - composed).cwiseAbs().maxCoeff() < 1e-12);
    }

    // Canonical kinds: chi and the kernel from their defining tables; the
    // normalized kind composes through the normalized gradient.
    Rng rng2(14);
    const Graph g = testutil::random_connected_graph(rng2, 12, 0.3);
    const EdgeKernel k = canonical_edge_kernel(g);
    const Vector deg = degrees(g);
    const Matrix f = testutil::random_matrix(rng2, 12, 2);

    const LaplacianOperator un = build_canonical(g, LaplacianKind::Unnormalized);
    CHECK((un.apply(f) +
           graph_divergence(graph_gradient(f, g, k), g, unit_vertex_measure(g), k))
              .cwiseAbs()
              .maxCoeff() < 1e-12);

    const LaplacianOperator rw = build_canonical(g, LaplacianKind::RandomWalk);
    CHECK((rw.apply(f) +
           graph_divergence(graph_gradient(f, g, k), g, make_vertex_measure(deg), k))
              .cwiseAbs()
              .maxCoeff() < 1e-12);

    const LaplacianOperator nl = build_canonical(g, LaplacianKind::Normalized);
    const VertexMeasure sqrt_deg = make_vertex_measure(deg.array().sqrt());
    CHECK((nl.apply(f) +
           graph_divergence(graph_gradient(f, g, k, GradientMode::Normalized, &deg), g, sqrt_deg, k))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("self-adjointness and positive semi-definiteness in the energy measure") {
    Rng rng(15);
    for (int rep = 0; rep < 25; ++rep) {
        const int n = 3 + rng.uniform_int(20);
        const Graph g = testutil::random_connected_graph(rng, n, 0.3);
        const Matrix X = testutil::random_matrix(rng, n, 3);
        const GeometryParams params = testutil::random_geometry(rng, 3);
        std::vector<LaplacianOperator> ops;
        ops.push_back(build_canonical(g, LaplacianKind::Unnormalized));
        ops.push_back(build_canonical(g, LaplacianKind::RandomWalk));
        ops.push_back(build_canonical(g, LaplacianKind::Normalized));
        ops.push_back(build_parameterized(g, X, params));
        for (const LaplacianOperator& op : ops) {
            const VertexMeasure m = make_vertex_measure(op.vertex_weights_for_energy());
            const Matrix f = testutil::random_matrix(rng, n, 2);
            const Matrix h = testutil::random_matrix(rng, n, 2);
            const double a = vertex_inner_product(f, op.apply(h), m);
            const double b = vertex_inner_product(op.apply(f), h, m);
            CHECK(std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(a)));
            CHECK(vertex_inner_product(f, op.apply(f), m) >= -1e-12);
        }
    }
}

TEST_CASE("dirichlet energy on hand instances and the energy identity") {
    const Graph g2 = k2();
    const LaplacianOperator un = build_canonical(g2, LaplacianKind::Unnormalized);
    CHECK(un.dirichlet_energy(Matrix::Constant(2, 1, 5.0)) == 0.0);
    Matrix f(2, 1);
    f << 1, 0;
    CHECK(un.dirichlet_energy(f) == 1.0);

    Rng rng(16);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 3 + rng.uniform_int(20);
        const Graph g = testutil::random_connected_graph(rng, n, 0.3);
        const Matrix X = testutil::random_matrix(rng, n, 3);
        const GeometryParams params = testutil::random_geometry(rng, 3);
        std::vector<LaplacianOperator> ops;
        ops.push_back(build_canonical(g, LaplacianKind::Unnormalized));
        ops.push_back(build_canonical(g, LaplacianKind::RandomWalk));
        ops.push_back(build_canonical(g, LaplacianKind::Normalized));
        ops.push_back(build_parameterized(g, X, params));
        for (const LaplacianOperator& op : ops) {
            const Matrix fm = testutil::random_matrix(rng, n, 2);
            const double s = op.dirichlet_energy(fm);
            const double q = vertex_inner_product(
                fm, op.apply(fm), make_vertex_measure(op.vertex_weights_for_energy()));
            CHECK(std::abs(s - q) <= 1e-10 * std::max(1.0, std::abs(s)));
        }
    }
}

TEST_CASE("dirichlet energy gradient: hand case and finite differences") {
    const Graph g2 = k2();
    const LaplacianOperator un = build_canonical(g2, LaplacianKind::Unnormalized);
    CHECK(un.dirichlet_energy_gradient(Matrix::Constant(2, 1, 2.0)).isZero(0.0));
    Matrix f(2, 1);
    f << 1, 0;
    Matrix expect(2, 1);
    expect << 2, -2;
    CHECK(un.dirichlet_energy_gradient(f).isApprox(expect));

    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 3 + rng.uniform_int(10);
        const Graph g = testutil::random_connected_graph(rng, n, 0.3);
        const Matrix X = testutil::random_matrix(rng, n, 3);
        const GeometryParams params = testutil::random_geometry(rng, 3);
        std::vector<LaplacianOperator> ops;
        ops.push_back(build_canonical(g, LaplacianKind::Unnormalized));
        ops.push_back(build_canonical(g, LaplacianKind::RandomWalk));
        ops.push_back(build_canonical(g, LaplacianKind::Normalized));
        ops.push_back(build_parameterized(g, X, params));
        for (const LaplacianOperator& op : ops) {
            Matrix fm = testutil::random_matrix(rng, n, 2);
            const Matrix grad = op.dirichlet_energy_gradient(fm);
            const double h = 1e-6;
            for (int probe = 0; probe < 6; ++probe) {
                const int i = rng.uniform_int(n);
                const int j = rng.uniform_int(2);
                const double save = fm(i, j);
                fm(i, j) = save + h;
                const double up = op.dirichlet_energy(fm);
                fm(i, j) = save - h;
                const double dn = op.dirichlet_energy(fm);
                fm(i, j) = save;
                const double fd = (up - dn) / (2.0 * h);
                CHECK(std::abs(grad(i, j) - fd) <=
                      1e-6 * std::max({1.0, std::abs(fd), std::abs(grad(i, j))}));
            }
        }
    }
}

TEST_CASE("coefficient CSV export") {
    const Graph g2 = k2();
    const LaplacianOperator un = build_canonical(g2, LaplacianKind::Unnormalized);
    std::ostringstream out;
    write_coefficients_csv(un, out);
    CHECK(out.str() == "i,j,coeff\n0,1,1\n1,0,1\n");
}
