#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dignn/errors.hpp"
#include "dignn/types.hpp"

namespace dignn {

struct WeightedEdge {
    int u = 0;
    int v = 0;
    double weight = 1.0;
};

/// Immutable undirected weighted graph in compressed row form. Both
/// directions of every undirected edge are stored as arcs, so arc a runs
/// from arc_sources()[a] to neighbor_ids()[a] with weight edge_weights()[a],
/// and reverse_arcs()[a] indexes the opposite direction. Adjacency lists
/// are sorted, weights are strictly positive, and there are no self-loops
/// or duplicate arcs. Safe for unrestricted concurrent reads.
class Graph {
public:
    Graph() = default;

    int num_nodes() const { return num_nodes_; }
    int num_arcs() const { return static_cast<int>(neighbor_ids_.size()); }

    const std::vector<int>& row_offsets() const { return row_offsets_; }
    const std::vector<int>& neighbor_ids() const { return neighbor_ids_; }
    const std::vector<double>& edge_weights() const { return edge_weights_; }
    const std::vector<int>& arc_sources() const { return arc_sources_; }
    const std::vector<int>& reverse_arcs() const { return reverse_arcs_; }

    int arc_begin(int i) const { return row_offsets_[static_cast<std::size_t>(i)]; }
    int arc_end(int i) const { return row_offsets_[static_cast<std::size_t>(i) + 1]; }

private:
    friend Graph build_graph(int, std::span<const WeightedEdge>);

    int num_nodes_ = 0;
    std::vector<int> row_offsets_{0};
    std::vector<int> neighbor_ids_;
    std::vector<double> edge_weights_;
    std::vector<int> arc_sources_;
    std::vector<int> reverse_arcs_;
};

/// Builds the canonical graph from an edge list: arcs are symmetrized,
/// duplicate edges have their weights summed, and self-loops are dropped
/// (they would contribute nothing to any difference operator).
inline Graph build_graph(int num_nodes, std::span<const WeightedEdge> edges) {
    if (num_nodes < 0) throw InvalidArgument("build_graph: negative node count");

    std::vector<WeightedEdge> undirected;
    undirected.reserve(edges.size());
    for (const WeightedEdge& e : edges) {
        if (e.u < 0 || e.u >= num_nodes || e.v < 0 || e.v >= num_nodes) {
            throw InvalidArgument("build_graph: edge index out of range: (" +
                                  std::to_string(e.u) + ", " + std::to_string(e.v) + ")");
        }
        if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
            throw InvalidArgument("build_graph: edge weight must be positive and finite");
        }
        if (e.u == e.v) continue;
        undirected.push_back({std::min(e.u, e.v), std::max(e.u, e.v), e.weight});
    }
    std::sort(undirected.begin(), undirected.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
        return std::pair(a.u, a.v) < std::pair(b.u, b.v);
    });
    // Collapse duplicates by summing weights.
    std::vector<WeightedEdge> merged;
    merged.reserve(undirected.size());
    for (const WeightedEdge& e : undirected) {
        if (!merged.empty() && merged.back().u == e.u && merged.back().v == e.v) {
            merged.back().weight += e.weight;
        } else {
            merged.push_back(e);
        }
    }

    Graph g;
    g.num_nodes_ = num_nodes;
    std::vector<int> counts(static_cast<std::size_t>(num_nodes), 0);
    for (const WeightedEdge& e : merged) {
        ++counts[static_cast<std::size_t>(e.u)];
        ++counts[static_cast<std::size_t>(e.v)];
    }
    g.row_offsets_.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
    for (int i = 0; i < num_nodes; ++i) {
        g.row_offsets_[static_cast<std::size_t>(i) + 1] =
            g.row_offsets_[static_cast<std::size_t>(i)] + counts[static_cast<std::size_t>(i)];
    }
    const int total_arcs = g.row_offsets_.back();
    g.neighbor_ids_.assign(static_cast<std::size_t>(total_arcs), 0);
    g.edge_weights_.assign(static_cast<std::size_t>(total_arcs), 0.0);
    g.arc_sources_.assign(static_cast<std::size_t>(total_arcs), 0);
    std::vector<int> cursor(g.row_offsets_.begin(), g.row_offsets_.end() - 1);
    // merged is sorted by (u, v), so per-row adjacency comes out sorted for
    // the u side; the v side needs a per-row sort afterwards.
    for (const WeightedEdge& e : merged) {
        int a = cursor[static_cast<std::size_t>(e.u)]++;
        g.neighbor_ids_[static_cast<std::size_t>(a)] = e.v;
        g.edge_weights_[static_cast<std::size_t>(a)] = e.weight;
        int b = cursor[static_cast<std::size_t>(e.v)]++;
        g.neighbor_ids_[static_cast<std::size_t>(b)] = e.u;
        g.edge_weights_[static_cast<std::size_t>(b)] = e.weight;
    }
    for (int i = 0; i < num_nodes; ++i) {
        const int lo = g.arc_begin(i), hi = g.arc_end(i);
        std::vector<std::pair<int, double>> row;
        row.reserve(static_cast<std::size_t>(hi - lo));
        for (int a = lo; a < hi; ++a) {
            row.emplace_back(g.neighbor_ids_[static_cast<std::size_t>(a)],
                             g.edge_weights_[static_cast<std::size_t>(a)]);
        }
        std::sort(row.begin(), row.end());
        for (int a = lo; a < hi; ++a) {
            g.neighbor_ids_[static_cast<std::size_t>(a)] = row[static_cast<std::size_t>(a - lo)].first;
            g.edge_weights_[static_cast<std::size_t>(a)] = row[static_cast<std::size_t>(a - lo)].second;
            g.arc_sources_[static_cast<std::size_t>(a)] = i;
        }
    }
    // Reverse-arc map: arc (i, j) -> position of (j, i) in row j.
    g.reverse_arcs_.assign(static_cast<std::size_t>(total_arcs), 0);
    for (int a = 0; a < total_arcs; ++a) {
        const int i = g.arc_sources_[static_cast<std::size_t>(a)];
        const int j = g.neighbor_ids_[static_cast<std::size_t>(a)];
        const auto first = g.neighbor_ids_.begin() + g.arc_begin(j);
        const auto last = g.neighbor_ids_.begin() + g.arc_end(j);
        const auto it = std::lower_bound(first, last, i);
        g.reverse_arcs_[static_cast<std::size_t>(a)] =
            static_cast<int>(it - g.neighbor_ids_.begin());
    }
    return g;
}

inline Graph build_graph(int num_nodes, const std::vector<WeightedEdge>& edges) {
    return build_graph(num_nodes, std::span<const WeightedEdge>(edges));
}

/// Per-node weighted degree D_i = sum_j A_ij.
inline Vector degrees(const Graph& g) {
    Vector d = Vector::Zero(g.num_nodes());
    for (int a = 0; a < g.num_arcs(); ++a) {
        d[g.arc_sources()[static_cast<std::size_t>(a)]] +=
            g.edge_weights()[static_cast<std::size_t>(a)];
    }
    return d;
}

inline bool is_connected(const Graph& g) {
    const int n = g.num_nodes();
    if (n <= 1) return true;
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int visited = 1;
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        for (int a = g.arc_begin(i); a < g.arc_end(i); ++a) {
            const int j = g.neighbor_ids()[static_cast<std::size_t>(a)];
            if (!seen[static_cast<std::size_t>(j)]) {
                seen[static_cast<std::size_t>(j)] = 1;
                ++visited;
                stack.push_back(j);
            }
        }
    }
    return visited == n;
}

/// True iff every connected component admits a 2-coloring.
inline bool is_bipartite(const Graph& g) {
    const int n = g.num_nodes();
    std::vector<signed char> color(static_cast<std::size_t>(n), -1);
    std::vector<int> stack;
    for (int s = 0; s < n; ++s) {
        if (color[static_cast<std::size_t>(s)] != -1) continue;
        color[static_cast<std::size_t>(s)] = 0;
        stack.assign(1, s);
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            for (int a = g.arc_begin(i); a < g.arc_end(i); ++a) {
                const int j = g.neighbor_ids()[static_cast<std::size_t>(a)];
                if (color[static_cast<std::size_t>(j)] == -1) {
                    color[static_cast<std::size_t>(j)] =
                        static_cast<signed char>(1 - color[static_cast<std::size_t>(i)]);
                    stack.push_back(j);
                } else if (color[static_cast<std::size_t>(j)] == color[static_cast<std::size_t>(i)]) {
                    return false;
                }
            }
        }
    }
    return true;
}

/// Unique undirected edges (u < v), suitable for rebuilding the graph.
inline std::vector<WeightedEdge> decompose(const Graph& g) {
    std::vector<WeightedEdge> edges;
    edges.reserve(static_cast<std::size_t>(g.num_arcs() / 2));
    for (int a = 0; a < g.num_arcs(); ++a) {
        const int i = g.arc_sources()[static_cast<std::size_t>(a)];
        const int j = g.neighbor_ids()[static_cast<std::size_t>(a)];
        if (i < j) edges.push_back({i, j, g.edge_weights()[static_cast<std::size_t>(a)]});
    }
    return edges;
}

/// Parses the edge-list text format: one `i j [w]` per line, zero-based,
/// weight defaulting to 1.0, `#` lines ignored. When num_nodes is negative
/// it is inferred as max index + 1.
inline Graph read_edge_list(std::istream& in, int num_nodes = -1) {
    std::vector<WeightedEdge> edges;
    std::string line;
    int line_no = 0;
    int max_index = -1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        WeightedEdge e;
        if (!(ls >> e.u >> e.v)) {
            throw ParseError("edge list line " + std::to_string(line_no) +
                             ": expected `i j [w]`");
        }
        if (!(ls >> e.weight)) e.weight = 1.0;
        std::string trailing;
        if (ls >> trailing) {
            throw ParseError("edge list line " + std::to_string(line_no) +
                             ": unexpected trailing token `" + trailing + "`");
        }
        if (e.u < 0 || e.v < 0) {
            throw ParseError("edge list line " + std::to_string(line_no) +
                             ": negative node index");
        }
        max_index = std::max({max_index, e.u, e.v});
        edges.push_back(e);
    }
    if (num_nodes < 0) num_nodes = max_index + 1;
    return build_graph(num_nodes, edges);
}

inline Graph load_edge_list(const std::string& path, int num_nodes = -1) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open edge list file: " + path);
    return read_edge_list(in, num_nodes);
}

inline void write_edge_list(const Graph& g, std::ostream& out) {
    for (const WeightedEdge& e : decompose(g)) {
        out << e.u << ' ' << e.v << ' ' << format_double(e.weight) << '\n';
    }
}

}  // namespace dignn
