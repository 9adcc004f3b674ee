#pragma once

#include "flexible.hpp"
#include "simulate.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace mmbm {

using Json = nlohmann::json;

inline Json to_json(const Matrix& A) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < A.cols(); ++j) row.push_back(A(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Json to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Json to_json(const RowVector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

// JSON has no inf/nan; absent estimates become null.
inline Json json_number(double v) {
    return std::isfinite(v) ? Json(v) : Json();
}

namespace detail {

inline const Json& require(const Json& j, const std::string& key,
                           const std::string& where) {
    auto it = j.find(key);
    if (it == j.end())
        throw InvalidModel("config: missing field '" + where + "." + key + "'");
    return *it;
}

inline double number_at(const Json& j, const std::string& where) {
    if (!j.is_number())
        throw InvalidModel("config: '" + where + "' must be a number");
    return j.get<double>();
}

} // namespace detail

inline Vector vector_from_json(const Json& j, const std::string& where) {
    if (!j.is_array() || j.empty())
        throw InvalidModel("config: '" + where + "' must be a non-empty array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i)
        v(static_cast<Eigen::Index>(i)) =
            detail::number_at(j[i], where + "[" + std::to_string(i) + "]");
    return v;
}

inline Matrix matrix_from_json(const Json& j, const std::string& where) {
    if (!j.is_array() || j.empty())
        throw InvalidModel("config: '" + where + "' must be a non-empty array of rows");
    const size_t cols = j[0].is_array() ? j[0].size() : 0;
    if (cols == 0)
        throw InvalidModel("config: '" + where + "' rows must be non-empty arrays");
    Matrix A(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            throw InvalidModel("config: '" + where + "' must be rectangular");
        for (size_t k = 0; k < cols; ++k)
            A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                detail::number_at(j[i][k], where + "[" + std::to_string(i) + "][" +
                                               std::to_string(k) + "]");
    }
    return A;
}

inline MmbmParams params_from_json(const Json& j, const std::string& where) {
    MmbmParams p;
    p.Q = matrix_from_json(detail::require(j, "Q", where), where + ".Q");
    p.mu = vector_from_json(detail::require(j, "mu", where), where + ".mu");
    const bool has_sigma = j.contains("sigma");
    const bool has_sigma2 = j.contains("sigma2");
    if (has_sigma == has_sigma2)
        throw InvalidModel("config: '" + where +
                           "' must provide exactly one of 'sigma' (volatility) "
                           "or 'sigma2' (variance)");
    if (has_sigma) {
        p.sigma = vector_from_json(j["sigma"], where + ".sigma");
    } else {
        Vector s2 = vector_from_json(j["sigma2"], where + ".sigma2");
        if (s2.minCoeff() <= 0.0)
            throw InvalidModel("config: '" + where + ".sigma2' must be positive");
        p.sigma = s2.cwiseSqrt();
    }
    return p;
}

inline Json params_to_json(const MmbmParams& p) {
    return Json{{"Q", to_json(p.Q)}, {"mu", to_json(p.mu)}, {"sigma", to_json(p.sigma)}};
}

inline FlexibleModel model_from_json(const Json& j) {
    FlexibleModel m;
    m.b = detail::number_at(detail::require(j, "b", "model"), "model.b");
    m.up = params_from_json(detail::require(j, "up", "model"), "model.up");
    m.down = params_from_json(detail::require(j, "down", "model"), "model.down");
    m.switch_at_top = matrix_from_json(detail::require(j, "switch_at_top", "model"),
                                       "model.switch_at_top");
    m.switch_at_bottom = matrix_from_json(
        detail::require(j, "switch_at_bottom", "model"), "model.switch_at_bottom");
    m.validate();
    return m;
}

inline Json model_to_json(const FlexibleModel& m) {
    return Json{{"b", m.b},
                {"up", params_to_json(m.up)},
                {"down", params_to_json(m.down)},
                {"switch_at_top", to_json(m.switch_at_top)},
                {"switch_at_bottom", to_json(m.switch_at_bottom)}};
}

struct ExperimentConfig {
    FlexibleModel model;
    std::vector<double> grid;  // nondecreasing levels in [0, b]
    std::vector<std::string> outputs;
    std::vector<double> percentile_levels;
    bool has_sim = false;
    SimConfig sim;
    bool has_validate = false;
    std::vector<double> lambdas;
    double validate_x = -1.0;  // negative means the b/2 default
};

inline std::vector<double> uniform_grid(double b, int count) {
    if (count < 2) throw InvalidModel("config: grid.count must be >= 2");
    std::vector<double> g(static_cast<size_t>(count));
    for (int k = 0; k < count; ++k)
        g[static_cast<size_t>(k)] = b * k / static_cast<double>(count - 1);
    g.back() = b;
    return g;
}

inline ExperimentConfig config_from_json(const Json& j) {
    ExperimentConfig cfg;
    cfg.model = model_from_json(detail::require(j, "model", "(root)"));

    if (j.contains("grid")) {
        const Json& g = j["grid"];
        if (g.is_array()) {
            for (size_t i = 0; i < g.size(); ++i)
                cfg.grid.push_back(
                    detail::number_at(g[i], "grid[" + std::to_string(i) + "]"));
        } else if (g.is_object() && g.contains("points")) {
            for (size_t i = 0; i < g["points"].size(); ++i)
                cfg.grid.push_back(detail::number_at(
                    g["points"][i], "grid.points[" + std::to_string(i) + "]"));
        } else if (g.is_object() && g.contains("count")) {
            if (!g["count"].is_number_integer())
                throw InvalidModel("config: grid.count must be an integer");
            cfg.grid = uniform_grid(cfg.model.b, g["count"].get<int>());
        } else {
            throw InvalidModel("config: 'grid' must be an array of levels or an "
                               "object with 'points' or 'count'");
        }
    } else {
        cfg.grid = uniform_grid(cfg.model.b, 41);
    }
    double prev = -1.0;
    for (double x : cfg.grid) {
        if (!(x >= 0.0 && x <= cfg.model.b && x > prev))
            throw InvalidModel("config: grid must be strictly increasing within "
                               "[0, b]");
        prev = x;
    }

    static const std::vector<std::string> known{"cdf", "percentiles", "excursions",
                                                "passage", "up_fraction"};
    if (j.contains("outputs")) {
        for (const auto& o : j["outputs"]) {
            if (!o.is_string() ||
                std::find(known.begin(), known.end(), o.get<std::string>()) ==
                    known.end())
                throw InvalidModel("config: outputs entries must be among "
                                   "cdf/percentiles/excursions/passage/up_fraction");
            cfg.outputs.push_back(o.get<std::string>());
        }
    } else {
        cfg.outputs = known;
    }

    if (j.contains("percentile_levels")) {
        for (size_t i = 0; i < j["percentile_levels"].size(); ++i) {
            const double p = detail::number_at(
                j["percentile_levels"][i],
                "percentile_levels[" + std::to_string(i) + "]");
            if (!(p >= 0.0 && p <= 1.0))
                throw InvalidModel("config: percentile_levels must lie in [0, 1]");
            cfg.percentile_levels.push_back(p);
        }
    } else {
        cfg.percentile_levels = {0.5, 0.9};
    }

    if (j.contains("sim")) {
        const Json& s = j["sim"];
        cfg.has_sim = true;
        if (s.contains("dt")) cfg.sim.dt = detail::number_at(s["dt"], "sim.dt");
        if (s.contains("n_cycles")) cfg.sim.n_cycles = s["n_cycles"].get<long>();
        if (s.contains("replications"))
            cfg.sim.replications = s["replications"].get<int>();
        if (s.contains("seed")) cfg.sim.seed = s["seed"].get<std::uint64_t>();
        if (s.contains("warmup_cycles"))
            cfg.sim.warmup_cycles = s["warmup_cycles"].get<long>();
    }

    if (j.contains("validate")) {
        const Json& v = j["validate"];
        cfg.has_validate = true;
        for (size_t i = 0; i < detail::require(v, "lambdas", "validate").size(); ++i)
            cfg.lambdas.push_back(detail::number_at(
                v["lambdas"][i], "validate.lambdas[" + std::to_string(i) + "]"));
        if (v.contains("x")) cfg.validate_x = detail::number_at(v["x"], "validate.x");
    }
    return cfg;
}

inline Json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw InvalidModel("config: cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw InvalidModel("config: " + path + ": " + e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) {
    return config_from_json(parse_json_file(path));
}

// Shortest round-trip formatting (17 significant digits always round-trips
// for IEEE doubles).
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

// RFC 4180: comma separated, CRLF line endings.
inline void write_csv(const std::string& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    auto emit = [&](const std::vector<std::string>& fields) {
        for (size_t i = 0; i < fields.size(); ++i) {
            if (i) out << ',';
            out << csv_field(fields[i]);
        }
        out << "\r\n";
    };
    emit(header);
    for (const auto& row : rows) emit(row);
}

inline void write_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

} // namespace mmbm
