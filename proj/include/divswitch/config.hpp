#pragma once

// Configuration document (JSON): model fields plus optional `numerics` and
// `simulation` sections. Missing numerics fall back to the defaults table.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "divswitch/errors.hpp"
#include "divswitch/fixedpoint.hpp"
#include "divswitch/model.hpp"

namespace divswitch {

/// Every default used by the tool.
struct Defaults {
    static constexpr std::size_t grid_n = kDefaultGridCells;
    static constexpr double tol = 1e-8;
    /// 0 means one grid cell.
    static constexpr double b_tol = 0.0;
    static constexpr std::size_t paths = 100000;
    static constexpr double dt = 1e-3;
    static constexpr std::uint64_t seed = 20240601;
    /// Horizon default: smallest T with exp(-min delta * T) <= this.
    static constexpr double horizon_discount = 1e-4;
};

struct Numerics {
    /// Empty means the solver's domain rule.
    std::optional<double> x_max;
    std::size_t grid_n = Defaults::grid_n;
    double tol = Defaults::tol;
    double b_tol = Defaults::b_tol;
};

struct Simulation {
    std::size_t paths = Defaults::paths;
    double dt = Defaults::dt;
    /// Empty means log(1/horizon_discount) / min delta.
    std::optional<double> horizon;
    std::uint64_t seed = Defaults::seed;
};

struct Config {
    RegimeModel model;
    Numerics numerics;
    Simulation simulation;
};

inline double default_horizon(const RegimeModel& model) {
    return std::log(1.0 / Defaults::horizon_discount) / model.min_delta();
}

inline double resolved_x_max(const Config& cfg) {
    return cfg.numerics.x_max ? *cfg.numerics.x_max : default_x_max(cfg.model);
}

inline double resolved_horizon(const Config& cfg) {
    return cfg.simulation.horizon ? *cfg.simulation.horizon : default_horizon(cfg.model);
}

namespace detail {

inline std::size_t positive_count(const Json& v, const std::string& field, std::size_t min) {
    if (!v.is_number_integer() && !(v.is_number() && v.get<double>() == std::floor(v.get<double>())))
        throw ConfigError("field '" + field + "' must be an integer");
    const double d = v.get<double>();
    if (d < static_cast<double>(min)) throw ConfigError("field '" + field + "' must be >= " + std::to_string(min));
    return static_cast<std::size_t>(d);
}

inline double positive_number(const Json& v, const std::string& field) {
    if (!v.is_number()) throw ConfigError("field '" + field + "' must be a number");
    const double d = v.get<double>();
    if (!(d > 0.0) || !std::isfinite(d)) throw ConfigError("field '" + field + "' must be positive");
    return d;
}

}  // namespace detail

inline Numerics parse_numerics(const Json& doc) {
    Numerics n;
    if (!doc.contains("numerics")) return n;
    const Json& s = doc.at("numerics");
    if (!s.is_object()) throw ConfigError("'numerics' must be an object");
    if (s.contains("x_max")) {
        const Json& v = s.at("x_max");
        if (v.is_string()) {
            if (v.get<std::string>() != "auto") throw ConfigError("numerics.x_max must be a number or \"auto\"");
        } else {
            n.x_max = detail::positive_number(v, "numerics.x_max");
        }
    }
    if (s.contains("grid_n")) n.grid_n = detail::positive_count(s.at("grid_n"), "numerics.grid_n", 2);
    if (s.contains("tol")) n.tol = detail::positive_number(s.at("tol"), "numerics.tol");
    if (s.contains("b_tol")) {
        const Json& v = s.at("b_tol");
        if (!v.is_number() || !(v.get<double>() >= 0.0)) throw ConfigError("numerics.b_tol must be >= 0");
        n.b_tol = v.get<double>();
    }
    return n;
}

inline Simulation parse_simulation(const Json& doc) {
    Simulation sim;
    if (!doc.contains("simulation")) return sim;
    const Json& s = doc.at("simulation");
    if (!s.is_object()) throw ConfigError("'simulation' must be an object");
    if (s.contains("paths")) sim.paths = detail::positive_count(s.at("paths"), "simulation.paths", 1);
    if (s.contains("dt")) sim.dt = detail::positive_number(s.at("dt"), "simulation.dt");
    if (s.contains("horizon")) {
        const Json& v = s.at("horizon");
        if (!(v.is_string() && v.get<std::string>() == "auto"))
            sim.horizon = detail::positive_number(v, "simulation.horizon");
    }
    if (s.contains("seed")) {
        const Json& v = s.at("seed");
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
            throw ConfigError("simulation.seed must be a nonnegative integer");
        sim.seed = v.get<std::uint64_t>();
    }
    return sim;
}

inline Config parse_config(const Json& doc) {
    return {build_model(doc), parse_numerics(doc), parse_simulation(doc)};
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError("cannot parse '" + origin + "': " + e.what());
    }
}

inline Json numerics_to_json(const Numerics& n, double x_max_resolved) {
    return Json{{"x_max", x_max_resolved},
                {"x_max_source", n.x_max ? "config" : "auto"},
                {"grid_n", n.grid_n},
                {"tol", n.tol},
                {"b_tol", n.b_tol}};
}

inline Json simulation_to_json(const Simulation& s, double horizon_resolved) {
    return Json{{"paths", s.paths}, {"dt", s.dt}, {"horizon", horizon_resolved}, {"seed", s.seed}};
}

inline Json defaults_to_json() {
    return Json{{"grid_n", Defaults::grid_n}, {"tol", Defaults::tol},     {"b_tol", Defaults::b_tol},
                {"paths", Defaults::paths},   {"dt", Defaults::dt},       {"seed", Defaults::seed},
                {"horizon_discount", Defaults::horizon_discount}};
}

}  // namespace divswitch
