#pragma once

// Problem instance for the regime-switching dividend/financing problem:
// per-regime diffusion coefficients, Markov generator, discount rates and
// the two transaction frictions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "divswitch/errors.hpp"

namespace divswitch {

using Json = nlohmann::json;

enum class DriftKind { constant, affine };
enum class VolKind { constant, affine };

/// mu(x) = a + k x; k is zero for the constant family.
struct DriftSpec {
    DriftKind kind = DriftKind::constant;
    double a = 0.0;
    double k = 0.0;

    double value(double x) const noexcept { return a + k * x; }
    double slope(double /*x*/) const noexcept { return k; }
};

/// sigma(x) = s + r x; r is zero for the constant family.
struct VolSpec {
    VolKind kind = VolKind::constant;
    double s = 0.0;
    double r = 0.0;

    double value(double x) const noexcept { return s + r * x; }
};

struct Regime {
    std::string name;
    double delta = 0.0;
    DriftSpec drift;
    VolSpec vol;
};

/// Volatilities below this are treated as vanishing.
inline constexpr double kSigmaFloor = 1e-8;

struct RegimeModel {
    std::vector<Regime> regimes;
    std::vector<std::vector<double>> q_matrix;
    double cost_c = 0.0;
    double cost_d = 0.0;
    double l_bar = 0.0;

    std::size_t size() const noexcept { return regimes.size(); }

    double q(std::size_t i, std::size_t j) const { return q_matrix[i][j]; }
    /// Total switching intensity out of regime i.
    double q_out(std::size_t i) const { return -q_matrix[i][i]; }
    double delta(std::size_t i) const { return regimes[i].delta; }
    double mu(double x, std::size_t i) const { return regimes[i].drift.value(x); }
    double sigma(double x, std::size_t i) const { return regimes[i].vol.value(x); }

    double min_delta() const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& r : regimes) m = std::min(m, r.delta);
        return m;
    }

    /// Marginal cost of one unit of injected surplus, 1/(1-c).
    double injection_price() const { return 1.0 / (1.0 - cost_c); }
    /// Net value to shareholders of one paid unit, 1/(1+d).
    double payout_price() const { return 1.0 / (1.0 + cost_d); }

    std::optional<std::size_t> find_regime(std::string_view name) const {
        for (std::size_t i = 0; i < regimes.size(); ++i)
            if (regimes[i].name == name) return i;
        return std::nullopt;
    }
};

/// Upper bound l_bar / (min delta (1+d)) shared by every element of class C.
inline double value_upper_bound(const RegimeModel& model) {
    return model.l_bar / (model.min_delta() * (1.0 + model.cost_d));
}

/// Magnitude used to scale absolute tolerances; never zero.
inline double value_scale(const RegimeModel& model) {
    const double b = value_upper_bound(model);
    return b > 0.0 && std::isfinite(b) ? b : 1.0;
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
    std::string rule;
    std::optional<std::size_t> regime;
    double x = 0.0;
    double measured = 0.0;
    std::string message;
};

struct ValidationReport {
    bool pass = true;
    std::vector<Violation> violations;
    /// Coefficient family per regime, e.g. "drift=affine,vol=constant".
    std::vector<std::string> families;

    void add(Violation v) {
        violations.push_back(std::move(v));
        pass = false;
    }
};

namespace detail {

inline std::string fmt_num(double v) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(6);
    os << v;
    return os.str();
}

inline const char* kind_name(DriftKind k) { return k == DriftKind::constant ? "constant" : "affine"; }
inline const char* kind_name(VolKind k) { return k == VolKind::constant ? "constant" : "affine"; }

}  // namespace detail

/// Check every standing assumption that can be checked on the uniform grid
/// with grid_n cells over [0, x_max]. Violations are collected, never thrown.
inline ValidationReport validate_model(const RegimeModel& model, double x_max, std::size_t grid_n) {
    ValidationReport rep;
    if (!(x_max > 0.0) || grid_n < 2) {
        rep.add({"grid", std::nullopt, x_max, static_cast<double>(grid_n),
                 "x_max must be positive and grid_n >= 2"});
        return rep;
    }
    const std::size_t m = model.size();
    if (m == 0) {
        rep.add({"regimes", std::nullopt, 0.0, 0.0, "at least one regime is required"});
        return rep;
    }
    if (model.q_matrix.size() != m) {
        rep.add({"q_shape", std::nullopt, 0.0, static_cast<double>(model.q_matrix.size()),
                 "q_matrix must be m x m"});
        return rep;
    }
    for (std::size_t i = 0; i < m; ++i) {
        const auto& row = model.q_matrix[i];
        if (row.size() != m) {
            rep.add({"q_shape", i, 0.0, static_cast<double>(row.size()), "q_matrix must be m x m"});
            continue;
        }
        double sum = 0.0, mag = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            sum += row[j];
            mag += std::abs(row[j]);
            if (j != i && row[j] < 0.0)
                rep.add({"q_offdiag_nonnegative", i, 0.0, row[j],
                         "off-diagonal generator entry is negative"});
        }
        if (std::abs(sum) > 1e-12 * std::max(1.0, mag))
            rep.add({"q_row_sum", i, 0.0, sum, "generator row sum is not zero"});
    }

    const double c = model.cost_c, d = model.cost_d, lb = model.l_bar;
    if (!(c >= 0.0 && c < 1.0)) rep.add({"cost_c_range", std::nullopt, 0.0, c, "c must lie in [0,1)"});
    if (!(d >= 0.0)) rep.add({"cost_d_range", std::nullopt, 0.0, d, "d must be nonnegative"});
    if (!(lb >= 0.0)) rep.add({"l_bar_range", std::nullopt, 0.0, lb, "l_bar must be positive"});
    else if (lb == 0.0)
        rep.add({"l_bar_degenerate", std::nullopt, 0.0, lb,
                 "l_bar = 0 is degenerate (accepted for simulation tests only)"});

    const double h = x_max / static_cast<double>(grid_n);
    for (std::size_t i = 0; i < m; ++i) {
        const Regime& r = model.regimes[i];
        rep.families.push_back(std::string("drift=") + detail::kind_name(r.drift.kind) +
                               ",vol=" + detail::kind_name(r.vol.kind));

        if (!(r.delta > 0.0)) rep.add({"delta_positive", i, 0.0, r.delta, "delta must be positive"});

        const double mu0 = r.drift.value(0.0);
        if (!(mu0 >= 0.0)) rep.add({"drift_at_zero", i, 0.0, mu0, "mu(0) must be nonnegative"});

        // Condition 1 is enforced by family: bounded coefficients, or affine
        // drift with positive slope and constant volatility.
        if (r.vol.kind == VolKind::affine && r.vol.r != 0.0)
            rep.add({"condition1_family", i, 0.0, r.vol.r,
                     "affine volatility with nonzero slope is outside the certified families"});
        if (r.drift.kind == DriftKind::affine && r.drift.k < 0.0)
            rep.add({"condition1_family", i, 0.0, r.drift.k,
                     "affine drift with negative slope is outside the certified families"});

        // Grid scans use the closed-form derivatives of the families.
        std::optional<std::size_t> first_c2, last_c2, first_sig;
        double worst_c2 = 0.0, worst_sig = 0.0;
        for (std::size_t k = 0; k <= grid_n; ++k) {
            const double x = h * static_cast<double>(k);
            const double slope = r.drift.slope(x);
            if (slope > r.delta + 1e-12) {
                if (!first_c2) first_c2 = k;
                last_c2 = k;
                worst_c2 = std::max(worst_c2, slope);
            }
            const double sig = r.vol.value(x);
            if (!(sig >= kSigmaFloor) && !first_sig) {
                first_sig = k;
                worst_sig = sig;
            }
        }
        if (first_c2) {
            const bool all = *first_c2 == 0 && *last_c2 == grid_n;
            rep.add({"condition2", i, h * static_cast<double>(*first_c2), worst_c2,
                     all ? std::string("Condition 2 (mu' <= delta) fails at all x")
                         : "Condition 2 (mu' <= delta) fails on [" +
                               detail::fmt_num(h * static_cast<double>(*first_c2)) + ", " +
                               detail::fmt_num(h * static_cast<double>(*last_c2)) + "]"});
        }
        if (first_sig) {
            const double xs = h * static_cast<double>(*first_sig);
            rep.add({"sigma_floor", i, xs, worst_sig,
                     "sigma non-positive (below floor) at x >= " + detail::fmt_num(xs)});
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Configuration ingestion

namespace detail {

inline const Json& require(const Json& obj, const char* key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key))
        throw ConfigError("missing field '" + path + key + "'");
    return obj.at(key);
}

inline double require_number(const Json& obj, const char* key, const std::string& path) {
    const Json& v = require(obj, key, path);
    if (!v.is_number()) throw ConfigError("field '" + path + key + "' must be a number");
    return v.get<double>();
}

inline std::string require_string(const Json& obj, const char* key, const std::string& path) {
    const Json& v = require(obj, key, path);
    if (!v.is_string()) throw ConfigError("field '" + path + key + "' must be a string");
    return v.get<std::string>();
}

}  // namespace detail

/// Build a RegimeModel from the configuration document. Mathematical
/// parameters have no defaults; everything must be present.
inline RegimeModel build_model(const Json& doc) {
    using detail::require;
    using detail::require_number;
    using detail::require_string;

    if (!doc.is_object()) throw ConfigError("configuration must be an object");
    RegimeModel model;

    const Json& regs = require(doc, "regimes", "");
    if (!regs.is_array() || regs.empty()) throw ConfigError("'regimes' must be a nonempty list");
    for (std::size_t i = 0; i < regs.size(); ++i) {
        const std::string p = "regimes[" + std::to_string(i) + "].";
        const Json& r = regs[i];
        Regime reg;
        reg.name = require_string(r, "name", p);
        reg.delta = require_number(r, "delta", p);
        if (!(reg.delta > 0.0))
            throw ConfigError("delta must be positive (regime '" + reg.name + "')", "delta_positive");

        const Json& dr = require(r, "drift", p);
        const std::string dk = require_string(dr, "kind", p + "drift.");
        reg.drift.a = require_number(dr, "a", p + "drift.");
        if (dk == "constant") {
            reg.drift.kind = DriftKind::constant;
        } else if (dk == "affine") {
            reg.drift.kind = DriftKind::affine;
            reg.drift.k = require_number(dr, "k", p + "drift.");
        } else {
            throw ConfigError("unknown drift kind '" + dk + "' at " + p + "drift.kind");
        }

        const Json& vo = require(r, "vol", p);
        const std::string vk = require_string(vo, "kind", p + "vol.");
        reg.vol.s = require_number(vo, "s", p + "vol.");
        if (vk == "constant") {
            reg.vol.kind = VolKind::constant;
        } else if (vk == "affine") {
            reg.vol.kind = VolKind::affine;
            reg.vol.r = require_number(vo, "r", p + "vol.");
        } else {
            throw ConfigError("unknown vol kind '" + vk + "' at " + p + "vol.kind");
        }
        for (const auto& other : model.regimes)
            if (other.name == reg.name) throw ConfigError("duplicate regime name '" + reg.name + "'");
        model.regimes.push_back(std::move(reg));
    }

    const std::size_t m = model.regimes.size();
    const Json& q = require(doc, "q_matrix", "");
    if (!q.is_array() || q.size() != m)
        throw ConfigError("dimension mismatch: q_matrix must have " + std::to_string(m) + " rows", "q_shape");
    model.q_matrix.assign(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        if (!q[i].is_array() || q[i].size() != m)
            throw ConfigError("dimension mismatch: q_matrix row " + std::to_string(i) + " must have " +
                              std::to_string(m) + " entries",
                              "q_shape");
        double sum = 0.0, mag = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (!q[i][j].is_number()) throw ConfigError("q_matrix entries must be numbers");
            const double v = q[i][j].get<double>();
            if (j != i && v < 0.0)
                throw ConfigError("generator off-diagonal entry q[" + std::to_string(i) + "][" +
                                  std::to_string(j) + "] is negative",
                                  "q_offdiag_nonnegative");
            model.q_matrix[i][j] = v;
            sum += v;
            mag += std::abs(v);
        }
        if (std::abs(sum) > 1e-12 * std::max(1.0, mag))
            throw ConfigError("generator row sum of row " + std::to_string(i) + " is " +
                              detail::fmt_num(sum) + ", expected 0",
                              "q_row_sum");
    }

    const Json& costs = require(doc, "costs", "");
    model.cost_c = require_number(costs, "c", "costs.");
    model.cost_d = require_number(costs, "d", "costs.");
    if (!(model.cost_c >= 0.0 && model.cost_c < 1.0)) throw ConfigError("costs.c must lie in [0,1)", "cost_c_range");
    if (!(model.cost_d >= 0.0)) throw ConfigError("costs.d must be nonnegative", "cost_d_range");
    model.l_bar = require_number(doc, "l_bar", "");
    if (!(model.l_bar >= 0.0)) throw ConfigError("l_bar must be nonnegative", "l_bar_range");
    return model;
}

/// Inverse of build_model on the model fields.
inline Json model_to_json(const RegimeModel& model) {
    Json regs = Json::array();
    for (const auto& r : model.regimes) {
        Json drift = {{"kind", detail::kind_name(r.drift.kind)}, {"a", r.drift.a}};
        if (r.drift.kind == DriftKind::affine) drift["k"] = r.drift.k;
        Json vol = {{"kind", detail::kind_name(r.vol.kind)}, {"s", r.vol.s}};
        if (r.vol.kind == VolKind::affine) vol["r"] = r.vol.r;
        regs.push_back({{"name", r.name}, {"delta", r.delta}, {"drift", drift}, {"vol", vol}});
    }
    return Json{{"regimes", regs},
                {"q_matrix", model.q_matrix},
                {"costs", {{"c", model.cost_c}, {"d", model.cost_d}}},
                {"l_bar", model.l_bar}};
}

}  // namespace divswitch
