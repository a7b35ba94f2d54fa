#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dignn/equilibrium.hpp"
#include "dignn/model.hpp"
#include "dignn/oversmoothing.hpp"
#include "dignn/spectral.hpp"
#include "dignn/train.hpp"

namespace dignn {

using json = nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j) {
    if (!j.is_array()) throw ParseError("matrix json: expected an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return Matrix(0, 0);
    const auto cols = static_cast<Eigen::Index>(j.at(0).size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j.at(static_cast<std::size_t>(i));
        if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw ParseError("matrix json: ragged rows");
        }
        for (Eigen::Index jj = 0; jj < cols; ++jj) {
            m(i, jj) = row.at(static_cast<std::size_t>(jj)).get<double>();
        }
    }
    return m;
}

inline json vector_to_json(const Vector& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

inline Vector vector_from_json(const json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
    return v;
}

inline json to_json(const WellPosednessReport& r) {
    return json{{"lambda_max_estimate", r.lambda_max_estimate},
                {"analytic_bound", r.analytic_bound},
                {"mu", r.mu},
                {"well_posed", r.well_posed},
                {"margin", r.margin}};
}

/// Equilibrium results embed z_star up to `inline_cap` entries; larger
/// solutions go to a CSV sidecar referenced by path.
inline json to_json(const EquilibriumResult& r, const std::string& z_csv_path = "",
                    int inline_cap = 4096) {
    json j{{"iterations", r.iterations},
           {"converged", r.converged},
           {"z_star_norm", r.z_star_norm},
           {"residual_history", r.residual_history}};
    if (!z_csv_path.empty() && r.z_star.size() > inline_cap) {
        j["z_star_csv"] = z_csv_path;
    } else {
        j["z_star"] = matrix_to_json(r.z_star);
    }
    return j;
}

inline json to_json(const OstReport& r) {
    return json{{"max_abs_difference", r.max_abs_difference},
                {"feature_independent", r.feature_independent},
                {"converged_a", r.converged_a},
                {"converged_b", r.converged_b},
                {"equilibrium_a", matrix_to_json(r.equilibrium_a)},
                {"equilibrium_b", matrix_to_json(r.equilibrium_b)}};
}

inline json to_json(const OsiReport& r) {
    return json{{"max_row_deviation", r.max_row_deviation},
                {"rows_identical", r.rows_identical},
                {"iterations", r.iterations},
                {"predicted_row", vector_to_json(r.predicted_row)},
                {"limit_rows", matrix_to_json(r.limit_rows)}};
}

inline json to_json(const GradCheckReport& r) {
    json groups = json::array();
    for (const GradCheckGroup& g : r.groups) {
        groups.push_back(json{{"group", g.name}, {"max_rel_error", g.max_rel_error}});
    }
    return json{{"step", r.step}, {"max_rel_error", r.max_rel_error}, {"groups", groups}};
}

inline json to_json(const BoundsReport& r) {
    return json{{"theta_chi_norm", r.theta_chi_norm}, {"theta_phi_norm", r.theta_phi_norm},
                {"beta_hat", r.beta_hat},             {"bound", r.bound},
                {"mu", r.mu},                         {"ok", r.ok}};
}

inline json to_json(const TrainReport& r) {
    json epochs = json::array();
    for (const EpochMetrics& em : r.epochs) {
        epochs.push_back(json{{"epoch", em.epoch},
                              {"train_loss", em.train_loss},
                              {"train_acc", em.train_acc},
                              {"val_acc", em.val_acc}});
    }
    return json{{"best_epoch", r.best_epoch}, {"best_val_acc", r.best_val_acc}, {"epochs", epochs}};
}

inline json dense_layer_to_json(const DenseLayer& l) {
    return json{{"weights", matrix_to_json(l.weights)},
                {"bias", vector_to_json(l.bias)},
                {"activation", to_string(l.activation)}};
}

inline DenseLayer dense_layer_from_json(const json& j) {
    DenseLayer l;
    l.weights = matrix_from_json(j.at("weights"));
    l.bias = vector_from_json(j.at("bias"));
    l.activation = activation_from_string(j.at("activation").get<std::string>());
    return l;
}

inline constexpr int kCheckpointVersion = 1;

/// Full model state: every parameter array, solver configuration, and the
/// caller's RNG state. Doubles serialize with round-trip precision, so a
/// reloaded checkpoint evaluates bit-identically.
inline json checkpoint_to_json(const DignnModel& model, const std::string& rng_state = "") {
    json j;
    j["format"] = "dignn-checkpoint";
    j["version"] = kCheckpointVersion;
    j["config"] = json{{"preprocess_mode", to_string(model.preprocess_mode)},
                       {"laplacian_kind", to_string(model.laplacian_kind)},
                       {"mu", model.mu},
                       {"solver_tol", model.solver_tol},
                       {"solver_max_iter", model.solver_max_iter},
                       {"dropout_rate", model.dropout_rate},
                       {"readout", model.readout == Readout::Mean ? "mean" : "none"},
                       {"norm_enabled", model.norm_enabled}};
    json pre = json::array();
    for (const DenseLayer& l : model.preprocess) pre.push_back(dense_layer_to_json(l));
    j["preprocess"] = std::move(pre);
    if (model.norm_enabled) {
        j["norm"] = json{{"gamma", vector_to_json(model.norm.gamma)},
                         {"beta", vector_to_json(model.norm.beta)},
                         {"running_mean", vector_to_json(model.norm.running_mean)},
                         {"running_var", vector_to_json(model.norm.running_var)},
                         {"eps", model.norm.eps},
                         {"momentum", model.norm.momentum}};
    }
    if (model.geometry) {
        j["geometry"] = json{{"theta_chi", matrix_to_json(model.geometry->theta_chi)},
                             {"theta_phi", matrix_to_json(model.geometry->theta_phi)},
                             {"theta_varphi", matrix_to_json(model.geometry->theta_varphi)},
                             {"epsilon", model.geometry->epsilon},
                             {"norm_bound_B", model.geometry->norm_bound_B},
                             {"embed_bound_beta", model.geometry->embed_bound_beta}};
    }
    json out = json::array();
    for (const DenseLayer& l : model.output) out.push_back(dense_layer_to_json(l));
    j["output"] = std::move(out);
    j["rng_state"] = rng_state;
    return j;
}

inline DignnModel checkpoint_from_json(const json& j, std::string* rng_state = nullptr) {
    if (!j.contains("format") || j.at("format") != "dignn-checkpoint") {
        throw ParseError("checkpoint: unrecognized format");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
        throw ParseError("checkpoint: unsupported version");
    }
    DignnModel model;
    const json& cfg = j.at("config");
    model.preprocess_mode = preprocess_mode_from_string(cfg.at("preprocess_mode").get<std::string>());
    model.laplacian_kind = laplacian_kind_from_string(cfg.at("laplacian_kind").get<std::string>());
    model.mu = cfg.at("mu").get<double>();
    model.solver_tol = cfg.at("solver_tol").get<double>();
    model.solver_max_iter = cfg.at("solver_max_iter").get<int>();
    model.dropout_rate = cfg.at("dropout_rate").get<double>();
    model.readout = cfg.at("readout").get<std::string>() == "mean" ? Readout::Mean : Readout::None;
    model.norm_enabled = cfg.at("norm_enabled").get<bool>();
    for (const json& l : j.at("preprocess")) model.preprocess.push_back(dense_layer_from_json(l));
    if (model.norm_enabled) {
        const json& nj = j.at("norm");
        model.norm.gamma = vector_from_json(nj.at("gamma"));
        model.norm.beta = vector_from_json(nj.at("beta"));
        model.norm.running_mean = vector_from_json(nj.at("running_mean"));
        model.norm.running_var = vector_from_json(nj.at("running_var"));
        model.norm.eps = nj.at("eps").get<double>();
        model.norm.momentum = nj.at("momentum").get<double>();
    }
    if (j.contains("geometry")) {
        GeometryParams geo;
        const json& gj = j.at("geometry");
        geo.theta_chi = matrix_from_json(gj.at("theta_chi"));
        geo.theta_phi = matrix_from_json(gj.at("theta_phi"));
        geo.theta_varphi = matrix_from_json(gj.at("theta_varphi"));
        geo.epsilon = gj.at("epsilon").get<double>();
        geo.norm_bound_B = gj.at("norm_bound_B").get<double>();
        geo.embed_bound_beta = gj.at("embed_bound_beta").get<double>();
        model.geometry = std::move(geo);
    }
    for (const json& l : j.at("output")) model.output.push_back(dense_layer_from_json(l));
    if (rng_state != nullptr) *rng_state = j.value("rng_state", "");
    validate_model(model);
    return model;
}

inline void save_checkpoint(const DignnModel& model, const std::string& path,
                            const std::string& rng_state = "") {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out << checkpoint_to_json(model, rng_state).dump(2) << '\n';
}

inline DignnModel load_checkpoint(const std::string& path, std::string* rng_state = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return checkpoint_from_json(j, rng_state);
}

}  // namespace dignn
