#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dignn/errors.hpp"
#include "dignn/graph.hpp"
#include "dignn/rng.hpp"
#include "dignn/types.hpp"

namespace dignn {

/// A node-classification dataset; graph_offsets is non-empty only for
/// graph-level tasks, where it lists G+1 node boundaries of a
/// block-diagonal batch and labels/masks are per graph.
struct Dataset {
    Graph graph;
    Matrix features;
    std::vector<int> labels;
    std::vector<std::uint8_t> train_mask;
    std::vector<std::uint8_t> val_mask;
    std::vector<std::uint8_t> test_mask;
    int num_classes = 0;
    std::vector<int> graph_offsets;

    bool graph_level() const { return !graph_offsets.empty(); }
    int num_examples() const {
        return graph_level() ? static_cast<int>(graph_offsets.size()) - 1 : graph.num_nodes();
    }
};

inline void validate_dataset(const Dataset& ds) {
    if (ds.features.rows() != ds.graph.num_nodes()) {
        throw ShapeError("dataset: feature rows must match node count");
    }
    const int n = ds.num_examples();
    if (static_cast<int>(ds.labels.size()) != n) {
        throw ShapeError("dataset: one label per example required");
    }
    for (int y : ds.labels) {
        if (y < 0 || y >= ds.num_classes) throw InvalidArgument("dataset: label out of range");
    }
    for (const auto* mask : {&ds.train_mask, &ds.val_mask, &ds.test_mask}) {
        if (static_cast<int>(mask->size()) != n) {
            throw ShapeError("dataset: mask length must match example count");
        }
    }
    for (int i = 0; i < n; ++i) {
        const int members = ds.train_mask[static_cast<std::size_t>(i)] +
                            ds.val_mask[static_cast<std::size_t>(i)] +
                            ds.test_mask[static_cast<std::size_t>(i)];
        if (members > 1) throw InvalidArgument("dataset: masks must be disjoint");
    }
}

/// Stratified-by-class random split. Fractions must sum to at most one;
/// every class must land at least one example in each non-zero split.
inline void split(Dataset& ds, double train_frac, double val_frac, double test_frac,
                  std::uint64_t seed) {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
        train_frac + val_frac + test_frac > 1.0 + 1e-12) {
        throw InvalidArgument("split: fractions must be non-negative and sum to at most 1");
    }
    const int n = ds.num_examples();
    ds.train_mask.assign(static_cast<std::size_t>(n), 0);
    ds.val_mask.assign(static_cast<std::size_t>(n), 0);
    ds.test_mask.assign(static_cast<std::size_t>(n), 0);
    Rng rng(seed);
    for (int cls = 0; cls < ds.num_classes; ++cls) {
        std::vector<int> members;
        for (int i = 0; i < n; ++i) {
            if (ds.labels[static_cast<std::size_t>(i)] == cls) members.push_back(i);
        }
        rng.shuffle(members);
        const int m = static_cast<int>(members.size());
        const int n_train = static_cast<int>(std::lround(train_frac * m));
        const int n_val = static_cast<int>(std::lround(val_frac * m));
        const int n_test = std::min(static_cast<int>(std::lround(test_frac * m)),
                                    m - n_train - n_val);
        if ((train_frac > 0 && n_train == 0) || (val_frac > 0 && n_val == 0) ||
            (test_frac > 0 && n_test <= 0)) {
            throw DomainError("split: class " + std::to_string(cls) +
                              " is too small for the requested fractions");
        }
        int k = 0;
        for (int i = 0; i < n_train; ++i) ds.train_mask[static_cast<std::size_t>(members[k++])] = 1;
        for (int i = 0; i < n_val; ++i) ds.val_mask[static_cast<std::size_t>(members[k++])] = 1;
        for (int i = 0; i < n_test; ++i) ds.test_mask[static_cast<std::size_t>(members[k++])] = 1;
    }
}

/// Stochastic block model with class-mean Gaussian features. Balanced
/// contiguous blocks; edges are independent Bernoulli draws at p_in within
/// a class and p_out across. Features are mean[class] + noise * N(0, I),
/// fixed per seed; only the edge draw is repeated (bounded) until the graph
/// comes out connected. A default 0.6/0.2/0.2 stratified split keyed on the
/// same seed is attached.
inline Dataset synth_sbm(int n, int k_classes, double p_in, double p_out, int feature_dim,
                         double feature_noise, std::uint64_t seed, int max_retries = 50) {
    if (n <= 0 || k_classes <= 0 || feature_dim <= 0) {
        throw InvalidArgument("synth_sbm: sizes must be positive");
    }
    if (p_in < 0 || p_in > 1 || p_out < 0 || p_out > 1) {
        throw InvalidArgument("synth_sbm: probabilities must lie in [0, 1]");
    }
    Dataset ds;
    ds.num_classes = k_classes;
    ds.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ds.labels[static_cast<std::size_t>(i)] =
            static_cast<int>((static_cast<long long>(i) * k_classes) / n);
    }

    Rng feature_rng(seed);
    Matrix means(k_classes, feature_dim);
    for (int c = 0; c < k_classes; ++c) {
        for (int d = 0; d < feature_dim; ++d) means(c, d) = feature_rng.normal();
    }
    ds.features.resize(n, feature_dim);
    for (int i = 0; i < n; ++i) {
        for (int d = 0; d < feature_dim; ++d) {
            ds.features(i, d) = means(ds.labels[static_cast<std::size_t>(i)], d) +
                                feature_noise * feature_rng.normal();
        }
    }

    bool connected = false;
    for (int attempt = 0; attempt < max_retries && !connected; ++attempt) {
        Rng edge_rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(attempt + 1)));
        std::vector<WeightedEdge> edges;
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                const double p = (ds.labels[static_cast<std::size_t>(i)] ==
                                  ds.labels[static_cast<std::size_t>(j)])
                                     ? p_in
                                     : p_out;
                if (edge_rng.uniform() < p) edges.push_back({i, j, 1.0});
            }
        }
        ds.graph = build_graph(n, edges);
        connected = is_connected(ds.graph);
    }
    if (!connected) {
        throw DomainError("synth_sbm: graph stayed disconnected after " +
                          std::to_string(max_retries) + " edge draws");
    }
    split(ds, 0.6, 0.2, 0.2, seed);
    validate_dataset(ds);
    return ds;
}

namespace detail {

inline Matrix read_csv_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open csv file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                std::size_t pos = 0;
                row.push_back(std::stod(cell, &pos));
                while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
                if (pos != cell.size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw ParseError(path + " line " + std::to_string(line_no) +
                                 ": not a number: `" + cell + "`");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ParseError(path + " line " + std::to_string(line_no) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError(path + ": empty csv");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows.front().size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

inline std::vector<int> read_label_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open label file: " + path);
    std::vector<int> labels;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        try {
            std::size_t pos = 0;
            labels.push_back(std::stoi(line, &pos));
            while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
            if (pos != line.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ParseError(path + " line " + std::to_string(line_no) + ": not an integer label");
        }
    }
    return labels;
}

}  // namespace detail

inline void write_csv_matrix(const Matrix& m, std::ostream& out) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

/// Loads a node-classification dataset from `i j [w]` edges, headerless
/// feature CSV, one-integer-per-line labels, and a JSON split document with
/// `train`/`val`/`test` index arrays. An empty split path produces the
/// deterministic default split (0.6/0.2/0.2, seed 0).
inline Dataset load_dataset(const std::string& edge_path, const std::string& feature_path,
                            const std::string& label_path, const std::string& split_path = "") {
    Dataset ds;
    ds.features = detail::read_csv_matrix(feature_path);
    const int n = static_cast<int>(ds.features.rows());
    ds.graph = load_edge_list(edge_path, n);
    ds.labels = detail::read_label_file(label_path);
    if (static_cast<int>(ds.labels.size()) != n) {
        throw ShapeError("load_dataset: label count (" + std::to_string(ds.labels.size()) +
                         ") does not match feature rows (" + std::to_string(n) + ")");
    }
    ds.num_classes = 0;
    for (int y : ds.labels) {
        if (y < 0) throw InvalidArgument("load_dataset: negative label");
        ds.num_classes = std::max(ds.num_classes, y + 1);
    }
    if (split_path.empty()) {
        split(ds, 0.6, 0.2, 0.2, 0);
    } else {
        std::ifstream in(split_path);
        if (!in) throw IoError("cannot open split file: " + split_path);
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(split_path + ": " + e.what());
        }
        auto read_mask = [&doc, n, &split_path](const char* key) {
            std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
            if (!doc.contains(key)) {
                throw ParseError(split_path + ": missing `" + key + "` array");
            }
            for (const auto& v : doc.at(key)) {
                const int i = v.get<int>();
                if (i < 0 || i >= n) {
                    throw InvalidArgument(split_path + ": split index out of range: " +
                                          std::to_string(i));
                }
                mask[static_cast<std::size_t>(i)] = 1;
            }
            return mask;
        };
        ds.train_mask = read_mask("train");
        ds.val_mask = read_mask("val");
        ds.test_mask = read_mask("test");
    }
    validate_dataset(ds);
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& edge_path,
                         const std::string& feature_path, const std::string& label_path,
                         const std::string& split_path) {
    {
        std::ofstream out(edge_path);
        if (!out) throw IoError("cannot write " + edge_path);
        write_edge_list(ds.graph, out);
    }
    {
        std::ofstream out(feature_path);
        if (!out) throw IoError("cannot write " + feature_path);
        write_csv_matrix(ds.features, out);
    }
    {
        std::ofstream out(label_path);
        if (!out) throw IoError("cannot write " + label_path);
        for (int y : ds.labels) out << y << '\n';
    }
    {
        nlohmann::json doc;
        for (const char* key : {"train", "val", "test"}) {
            doc[key] = nlohmann::json::array();
        }
        for (int i = 0; i < ds.num_examples(); ++i) {
            if (ds.train_mask[static_cast<std::size_t>(i)]) doc["train"].push_back(i);
            if (ds.val_mask[static_cast<std::size_t>(i)]) doc["val"].push_back(i);
            if (ds.test_mask[static_cast<std::size_t>(i)]) doc["test"].push_back(i);
        }
        std::ofstream out(split_path);
        if (!out) throw IoError("cannot write " + split_path);
        out << doc.dump(2) << '\n';
    }
}

/// Block-diagonal assembly of several graphs into one, with segment
/// offsets for per-graph readout.
inline std::pair<Graph, std::vector<int>> merge_graphs(const std::vector<Graph>& graphs) {
    std::vector<int> offsets{0};
    int total = 0;
    for (const Graph& g : graphs) {
        total += g.num_nodes();
        offsets.push_back(total);
    }
    std::vector<WeightedEdge> edges;
    for (std::size_t k = 0; k < graphs.size(); ++k) {
        const int base = offsets[k];
        for (const WeightedEdge& e : decompose(graphs[k])) {
            edges.push_back({e.u + base, e.v + base, e.weight});
        }
    }
    return {build_graph(total, edges), std::move(offsets)};
}

}  // namespace dignn
