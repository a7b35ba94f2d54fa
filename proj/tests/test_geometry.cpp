#include <catch2/catch_amalgamated.hpp>

#include "dignn/geometry.hpp"
#include "dignn/graph.hpp"
#include "helpers.hpp"

using namespace dignn;

namespace {

Graph k2() { return build_graph(2, std::vector<WeightedEdge>{{0, 1}}); }

}  // namespace

TEST_CASE("vertex inner product") {
    const Graph g = k2();
    Matrix f(2, 1), h(2, 1);
    f << 1, 1;
    h << 1, 1;
    CHECK(vertex_inner_product(f, h, unit_vertex_measure(g)) == 2.0);

    f << 1, 0;
    h << 0, 1;
    CHECK(vertex_inner_product(f, h, unit_vertex_measure(g)) == 0.0);

    f << 2, 3;
    h << 1, 1;
    Vector chi(2);
    chi << 1, 2;
    CHECK(vertex_inner_product(f, h, make_vertex_measure(chi)) == 8.0);

    Matrix wrong(3, 1);
    CHECK_THROWS_AS(vertex_inner_product(f, wrong, unit_vertex_measure(g)), ShapeError);
}

TEST_CASE("vertex measure must be positive") {
    Vector chi(2);
    chi << 1.0, 0.0;
    CHECK_THROWS_AS(make_vertex_measure(chi), InvalidArgument);
}

TEST_CASE("edge inner product") {
    const Graph g = k2();
    const EdgeKernel k = unit_edge_kernel(g);
    Matrix F = Matrix::Ones(2, 1);
    CHECK(edge_inner_product(F, F, g, k) == 1.0);  // half of both arcs

    CHECK(edge_inner_product(Matrix::Zero(2, 1), F, g, k) == 0.0);

    Matrix anti(2, 1);
    anti << 1, -1;
    CHECK(edge_inner_product(anti, anti, g, k) == 1.0);
}

TEST_CASE("edge kernel validation") {
    const Graph g = k2();
    Vector phi(2), varphi(2);
    phi << 1.0, 2.0;  // asymmetric
    varphi << 1.0, 1.0;
    CHECK_THROWS_AS(make_edge_kernel(g, phi, varphi), InvalidArgument);
    phi << 1.0, 1.0;
    varphi << 0.0, 0.0;  // varphi must be strictly positive
    CHECK_THROWS_AS(make_edge_kernel(g, phi, varphi), InvalidArgument);
}

TEST_CASE("graph gradient on hand instances") {
    const Graph g = k2();
    const EdgeKernel k = unit_edge_kernel(g);

    CHECK(graph_gradient(Matrix::Constant(2, 3, 4.2), g, k).isZero(0.0));

    Matrix f(2, 1);
    f << 0, 1;
    const Matrix grad = graph_gradient(f, g, k);
    CHECK(grad(0, 0) == 1.0);   // arc 0 -> 1
    CHECK(grad(1, 0) == -1.0);  // arc 1 -> 0

    const Vector deg = degrees(g);
    Matrix ones = Matrix::Ones(2, 1);
    CHECK(graph_gradient(ones, g, k, GradientMode::Normalized, &deg).isZero(0.0));
}

TEST_CASE("normalized gradient rejects zero degrees") {
    const Graph g = build_graph(3, std::vector<WeightedEdge>{{0, 1}});
    const EdgeKernel k = unit_edge_kernel(g);
    const Vector deg = degrees(g);
    CHECK_THROWS_AS(graph_gradient(Matrix::Ones(3, 1), g, k, GradientMode::Normalized, &deg),
                    DomainError);
}

TEST_CASE("graph divergence on hand instances") {
    const Graph g = k2();
    const EdgeKernel k = unit_edge_kernel(g);
    const VertexMeasure m = unit_vertex_measure(g);

    // Arc-symmetric functions have zero divergence.
    CHECK(graph_divergence(Matrix::Constant(2, 2, 3.0), g, m, k).isZero(0.0));
    CHECK(graph_divergence(Matrix::Zero(2, 1), g, m, k).isZero(0.0));

    Matrix f(2, 1);
    f << 0, 1;
    const Matrix div = graph_divergence(graph_gradient(f, g, k), g, m, k);
    CHECK(div(0, 0) == 1.0);
    CHECK(div(1, 0) == -1.0);
}

TEST_CASE("adjointness <grad f, g>_E = <f, -div g>_V on random draws") {
    Rng rng(101);
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 2 + rng.uniform_int(20);
        const int c = 1 + rng.uniform_int(3);
        const Graph g = testutil::random_connected_graph(rng, n, 0.3);
        const EdgeKernel k = testutil::random_edge_kernel(rng, g);
        const VertexMeasure m = make_vertex_measure(testutil::random_positive_vector(rng, n));
        const Matrix f = testutil::random_matrix(rng, n, c);
        const Matrix arc_fun = testutil::random_matrix(rng, g.num_arcs(), c);

        const double lhs = edge_inner_product(graph_gradient(f, g, k), arc_fun, g, k);
        const double rhs = vertex_inner_product(f, -graph_divergence(arc_fun, g, m, k), m);
        const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
        CHECK(std::abs(lhs - rhs) <= 1e-10 * scale);
    }
}
