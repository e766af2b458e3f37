#pragma once

// Grid functions f(x, i) and membership tests for the candidate classes
// C (bounded, nondecreasing) and D (additionally concave with chord slopes
// at most 1/(1-c)).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "divswitch/errors.hpp"
#include "divswitch/format.hpp"
#include "divswitch/model.hpp"

namespace divswitch {

/// Uniform grid with cells+1 nodes on [0, x_max].
class Grid {
public:
    Grid(double x_max, std::size_t cells) : x_max_(x_max), cells_(cells) {
        if (!(x_max > 0.0) || !std::isfinite(x_max)) throw std::invalid_argument("grid: x_max must be positive");
        if (cells < 2) throw std::invalid_argument("grid: need at least 2 cells");
        h_ = x_max / static_cast<double>(cells);
    }

    double x_max() const noexcept { return x_max_; }
    std::size_t cells() const noexcept { return cells_; }
    std::size_t nodes() const noexcept { return cells_ + 1; }
    double h() const noexcept { return h_; }
    double x(std::size_t k) const noexcept { return k == cells_ ? x_max_ : h_ * static_cast<double>(k); }

    std::size_t nearest_node(double x) const {
        const double k = std::round(x / h_);
        return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(cells_)));
    }

    bool operator==(const Grid& o) const noexcept { return x_max_ == o.x_max_ && cells_ == o.cells_; }

private:
    double x_max_;
    std::size_t cells_;
    double h_;
};

/// f(x_k, i) for every node and regime on one shared grid.
class RegimeFunction {
public:
    RegimeFunction(Grid grid, std::vector<std::vector<double>> values)
        : grid_(grid), values_(std::move(values)) {
        if (values_.empty()) throw std::invalid_argument("RegimeFunction: no regimes");
        for (const auto& v : values_) {
            if (v.size() != grid_.nodes()) throw std::invalid_argument("RegimeFunction: regime size differs from grid");
            for (double y : v)
                if (!std::isfinite(y)) throw std::invalid_argument("RegimeFunction: non-finite value");
        }
    }

    static RegimeFunction constant(Grid grid, std::size_t regimes, double value) {
        return RegimeFunction(grid, std::vector<std::vector<double>>(regimes, std::vector<double>(grid.nodes(), value)));
    }

    template <class Fn>
    static RegimeFunction from(Grid grid, std::size_t regimes, Fn&& fn) {
        std::vector<std::vector<double>> v(regimes, std::vector<double>(grid.nodes()));
        for (std::size_t i = 0; i < regimes; ++i)
            for (std::size_t k = 0; k < grid.nodes(); ++k) v[i][k] = fn(grid.x(k), i);
        return RegimeFunction(grid, std::move(v));
    }

    const Grid& grid() const noexcept { return grid_; }
    std::size_t regimes() const noexcept { return values_.size(); }
    const std::vector<double>& operator[](std::size_t i) const { return values_[i]; }
    double at(std::size_t k, std::size_t i) const { return values_[i][k]; }
    /// f(infinity, i) is represented by the last node.
    double at_infinity(std::size_t i) const { return values_[i].back(); }
    const std::vector<std::vector<double>>& values() const noexcept { return values_; }

private:
    Grid grid_;
    std::vector<std::vector<double>> values_;
};

inline void require_same_shape(const RegimeFunction& f, const RegimeFunction& g) {
    if (!(f.grid() == g.grid()) || f.regimes() != g.regimes())
        throw std::invalid_argument("grid or regime set mismatch");
}

/// max over nodes and regimes of |f - g|.
inline double sup_norm_distance(const RegimeFunction& f, const RegimeFunction& g) {
    require_same_shape(f, g);
    double d = 0.0;
    for (std::size_t i = 0; i < f.regimes(); ++i)
        for (std::size_t k = 0; k < f.grid().nodes(); ++k) d = std::max(d, std::abs(f.at(k, i) - g.at(k, i)));
    return d;
}

/// Node slope: central difference inside, one-sided at both ends.
inline double node_slope(const std::vector<double>& v, double h, std::size_t k) {
    const std::size_t n = v.size() - 1;
    if (k == 0) return (v[1] - v[0]) / h;
    if (k == n) return (v[n] - v[n - 1]) / h;
    return (v[k + 1] - v[k - 1]) / (2.0 * h);
}

struct ValueSlope {
    double value;
    double slope;
};

/// Piecewise-linear value; node slope on nodes, cell slope between nodes.
inline ValueSlope eval_with_derivative(const RegimeFunction& f, double x, std::size_t i) {
    const Grid& g = f.grid();
    if (!(x >= 0.0 && x <= g.x_max())) throw std::out_of_range("eval_with_derivative: x outside [0, x_max]");
    if (i >= f.regimes()) throw std::out_of_range("eval_with_derivative: regime index");
    const auto& v = f[i];
    const double h = g.h();
    const double pos = x / h;
    const double kr = std::round(pos);
    if (std::abs(pos - kr) <= 1e-12 * std::max(1.0, pos)) {
        const auto k = static_cast<std::size_t>(std::min(kr, static_cast<double>(g.cells())));
        return {v[k], node_slope(v, h, k)};
    }
    const auto k = std::min(static_cast<std::size_t>(pos), g.cells() - 1);
    const double w = (x - g.x(k)) / h;
    return {(1.0 - w) * v[k] + w * v[k + 1], (v[k + 1] - v[k]) / h};
}

// ---------------------------------------------------------------------------
// Class membership

struct ClassViolation {
    std::string property;  // finite, nondecreasing, upper_bound, concave, slope
    std::size_t regime;
    std::size_t node;
    double magnitude;
};

struct ClassReport {
    bool in_C = true;
    bool in_D = true;
    std::vector<ClassViolation> violations;
};

struct ClassTolerances {
    double monotone;
    double concave;
    double bound;
    double slope;
};

inline ClassTolerances default_class_tolerances(const RegimeModel& model) {
    const double s = value_scale(model);
    return {1e-10 * s, 1e-8 * s, 1e-10 * s, 1e-8};
}

/// Checks nondecreasing values, the class upper bound, concavity through
/// second differences and adjacent chord slopes against 1/(1-c). With
/// concavity, adjacent slopes bound every chord.
inline ClassReport check_class_D(const RegimeFunction& f, const RegimeModel& model, const ClassTolerances& tol) {
    if (f.regimes() != model.size()) throw std::invalid_argument("check_class_D: regime count mismatch");
    ClassReport rep;
    const double bound = value_upper_bound(model);
    const double max_slope = model.injection_price();
    const double h = f.grid().h();
    // Record only the worst offender per (property, regime) to keep reports short.
    auto note = [&](const char* prop, std::size_t i, std::size_t k, double mag, bool c_level) {
        auto it = std::find_if(rep.violations.begin(), rep.violations.end(),
                               [&](const ClassViolation& v) { return v.property == prop && v.regime == i; });
        if (it == rep.violations.end()) {
            rep.violations.push_back({prop, i, k, mag});
        } else if (mag > it->magnitude) {
            it->magnitude = mag;
            it->node = k;
        }
        rep.in_D = false;
        if (c_level) rep.in_C = false;
    };
    for (std::size_t i = 0; i < f.regimes(); ++i) {
        const auto& v = f[i];
        const std::size_t n = v.size();
        for (std::size_t k = 0; k < n; ++k) {
            if (v[k] > bound + tol.bound) note("upper_bound", i, k, v[k] - bound, true);
            if (k + 1 < n) {
                const double diff = v[k + 1] - v[k];
                if (diff < -tol.monotone) note("nondecreasing", i, k, -diff, true);
                const double slope = diff / h;
                if (slope > max_slope + tol.slope) note("slope", i, k, slope - max_slope, false);
            }
            if (k > 0 && k + 1 < n) {
                const double d2 = v[k + 1] - 2.0 * v[k] + v[k - 1];
                if (d2 > tol.concave) note("concave", i, k, d2, false);
            }
        }
    }
    return rep;
}

inline ClassReport check_class_D(const RegimeFunction& f, const RegimeModel& model) {
    return check_class_D(f, model, default_class_tolerances(model));
}

// ---------------------------------------------------------------------------
// CSV: header "x,f_<name>,...", one row per node.

inline void write_regime_function_csv(std::ostream& os, const RegimeFunction& f,
                                      const std::vector<std::string>& names, const std::string& prefix = "f_") {
    std::vector<std::string> header{"x"};
    std::vector<std::vector<double>> cols;
    std::vector<double> xs(f.grid().nodes());
    for (std::size_t k = 0; k < xs.size(); ++k) xs[k] = f.grid().x(k);
    cols.push_back(std::move(xs));
    for (std::size_t i = 0; i < f.regimes(); ++i) {
        header.push_back(prefix + (i < names.size() ? names[i] : std::to_string(i)));
        cols.push_back(f[i]);
    }
    write_csv(os, header, cols);
}

/// Reads the first 1 + regimes columns written by write_regime_function_csv.
inline RegimeFunction read_regime_function_csv(std::istream& is, std::size_t regimes) {
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("empty CSV");
    std::vector<double> xs;
    std::vector<std::vector<double>> vals(regimes);
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        auto cells = split_view(line, ',');
        if (cells.size() < regimes + 1) throw ConfigError("CSV row has too few columns");
        xs.push_back(parse_double(cells[0]));
        for (std::size_t i = 0; i < regimes; ++i) vals[i].push_back(parse_double(cells[i + 1]));
    }
    if (xs.size() < 3 || xs.front() != 0.0) throw ConfigError("CSV grid must start at 0 with >= 3 nodes");
    Grid g(xs.back(), xs.size() - 1);
    for (std::size_t k = 0; k < xs.size(); ++k)
        if (std::abs(xs[k] - g.x(k)) > 1e-9 * g.x_max()) throw ConfigError("CSV grid is not uniform");
    return RegimeFunction(g, std::move(vals));
}

}  // namespace divswitch
