#pragma once

// Operator P(f)(., i) = R_{f, pi^{0, b_i^f}}(., i), its fixed point V, and an
// HJB audit of the converged solution.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "divswitch/errors.hpp"
#include "divswitch/funcspace.hpp"
#include "divswitch/model.hpp"
#include "divswitch/odesolver.hpp"
#include "divswitch/parallel.hpp"
#include "divswitch/threshold.hpp"

namespace divswitch {

/// kappa = max_i q_i / (q_i + delta_i).
inline double contraction_modulus(const RegimeModel& model) {
    double k = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) k = std::max(k, model.q_out(i) / (model.q_out(i) + model.delta(i)));
    return k;
}

namespace detail {

/// Positive and negative roots of a t^2 + b t - c = 0 with a, c > 0.
inline std::pair<double, double> char_roots(double a, double b, double c) {
    const double disc = std::sqrt(b * b + 4.0 * a * c);
    // Stable forms avoid cancellation for either sign of b.
    const double plus = b >= 0.0 ? 2.0 * c / (b + disc) : (-b + disc) / (2.0 * a);
    const double minus = b >= 0.0 ? (-b - disc) / (2.0 * a) : -2.0 * c / (disc - b);
    return {plus, minus};
}

}  // namespace detail

/// Domain length from frozen-coefficient exponents: the no-dividend length
/// scale L_i = 1/theta_+ gives the expected threshold scale, and the
/// dividend-region decay rate (evaluated at 10 L_i, discounting at the
/// smallest delta) sets where the tail falls below 1e-8.
inline double default_x_max(const RegimeModel& model) {
    const double dmin = model.min_delta();
    double xmax = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const double s0 = std::max(model.sigma(0.0, i), kSigmaFloor);
        const double a0 = 0.5 * s0 * s0;
        const double length = 1.0 / detail::char_roots(a0, model.mu(0.0, i), model.delta(i)).first;
        const double probe = 10.0 * length;
        const double sp = std::max(model.sigma(probe, i), kSigmaFloor);
        const double rate = -detail::char_roots(0.5 * sp * sp, model.mu(probe, i) - model.l_bar, dmin).second;
        const double tail = std::log(1e8) / rate;
        xmax = std::max({xmax, 10.0 * length, length + tail});
    }
    return xmax;
}

inline constexpr std::size_t kDefaultGridCells = 2000;

struct POutput {
    RegimeFunction value;
    std::vector<ThresholdResult> thresholds;
    std::vector<std::vector<double>> slopes;
};

struct POptions {
    ThresholdOptions threshold;
    std::size_t workers = 1;
};

/// One application of P. Regimes are independent given f and are solved
/// concurrently into disjoint slots.
inline POutput apply_P(const RegimeModel& model, const RegimeFunction& f, const POptions& opt = {}) {
    const std::size_t m = model.size();
    if (f.regimes() != m) throw std::invalid_argument("apply_P: regime count mismatch");
    std::vector<std::vector<double>> values(m), slopes(m);
    std::vector<ThresholdResult> th(m);
    parallel_for(m, opt.workers, [&](std::size_t i) {
        const ReturnProblem problem(model, f, i);
        th[i] = find_threshold(problem, model.payout_price(), opt.threshold);
        ReturnSolution sol = problem.solve(th[i].node);
        values[i] = std::move(sol.values);
        slopes[i] = std::move(sol.slopes);
    });
    for (std::size_t i = 0; i < m; ++i)
        if (th[i].boundary_case == BoundaryCase::capped_at_xmax)
            throw ThresholdCapped("threshold for regime '" + model.regimes[i].name + "' reached x_max=" +
                                  std::to_string(f.grid().x_max()) + " without meeting the slope condition; enlarge x_max");
    return {RegimeFunction(f.grid(), std::move(values)), std::move(th), std::move(slopes)};
}

/// Output of P with frozen threshold nodes (the operator Q).
inline RegimeFunction apply_Q(const RegimeModel& model, const RegimeFunction& f, const std::vector<std::size_t>& nodes) {
    std::vector<std::vector<double>> values(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) values[i] = ReturnProblem(model, f, i).solve(nodes.at(i)).values;
    return RegimeFunction(f.grid(), std::move(values));
}

enum class StartSide { lower, upper };

struct FixedPointOptions {
    double tol = 1e-8;
    /// 0 selects 10 * ceil(log(tol (1-kappa) / scale) / log kappa), at least 10.
    std::size_t max_iterations = 0;
    bool two_sided = true;
    POptions p;
    /// Called after every P application with (side, iteration, iterate).
    std::function<void(StartSide, std::size_t, const RegimeFunction&)> observer;
    /// Advisory messages (class checks on intermediate iterates).
    std::function<void(const std::string&)> log;
};

struct ValueSolution {
    explicit ValueSolution(RegimeFunction value) : v(std::move(value)) {}

    RegimeFunction v;
    std::vector<ThresholdResult> thresholds;
    std::vector<std::vector<double>> slopes;
    std::size_t iterations = 0;
    double last_step = 0.0;
    double error_bound = 0.0;
    double kappa = 0.0;
    std::size_t upper_iterations = 0;
    double bracket_gap = 0.0;
    std::size_t confirmation_sweeps = 0;
    ClassReport class_report;
    double wall_seconds = 0.0;
};

inline std::size_t default_iteration_cap(double kappa, double tol, double scale) {
    if (kappa <= 0.0) return 10;
    const double n = std::ceil(std::log(tol * (1.0 - kappa) / scale) / std::log(kappa));
    return std::max<std::size_t>(10, 10 * static_cast<std::size_t>(std::max(n, 1.0)));
}

namespace detail {

struct IterationResult {
    POutput out;
    std::size_t iterations = 0;
    double last_step = 0.0;
    std::size_t confirmation_sweeps = 0;
};

inline IterationResult iterate_P(const RegimeModel& model, RegimeFunction f, StartSide side,
                                 const FixedPointOptions& opt, double kappa, std::size_t cap) {
    const double factor = kappa / (1.0 - kappa);
    const std::size_t scan = std::max<std::size_t>(opt.p.threshold.scan_step, 1);
    IterationResult res{apply_P(model, f, opt.p), 0, 0.0, 0};
    for (std::size_t n = 1;; ++n) {
        if (n > 1) res.out = apply_P(model, f, opt.p);
        res.iterations = n;
        res.last_step = sup_norm_distance(res.out.value, f);
        if (opt.observer) opt.observer(side, n, res.out.value);
        if (opt.log) {
            const ClassReport cr = check_class_D(res.out.value, model);
            if (!cr.in_D) opt.log("iterate " + std::to_string(n) + " brushes class D tolerances");
        }
        if (factor * res.last_step <= opt.tol) {
            // Freeze the thresholds and sweep once more; accept if none moved
            // by more than one scan step.
            POutput confirm = apply_P(model, res.out.value, opt.p);
            ++res.confirmation_sweeps;
            bool stable = true;
            for (std::size_t i = 0; i < model.size(); ++i) {
                const auto a = res.out.thresholds[i].node, b = confirm.thresholds[i].node;
                if ((a > b ? a - b : b - a) > scan) stable = false;
            }
            const double step = sup_norm_distance(confirm.value, res.out.value);
            if (stable && factor * step <= opt.tol) {
                res.last_step = step;
                res.out = std::move(confirm);
                return res;
            }
            f = std::move(confirm.value);
            if (n >= cap) break;
            continue;
        }
        if (n >= cap) break;
        f = res.out.value;
    }
    throw NumericalError("fixed-point iteration cap of " + std::to_string(cap) +
                         " exceeded (last step " + std::to_string(res.last_step) + ", kappa " +
                         std::to_string(kappa) + ")");
}

}  // namespace detail

/// Iterates P from g1 = 0 (and, when two_sided, from g2 = value_upper_bound)
/// until kappa/(1-kappa) ||f_{n+1} - f_n|| <= tol.
inline ValueSolution solve_value_function(const RegimeModel& model, const Grid& grid, const FixedPointOptions& opt = {}) {
    if (!(opt.tol > 0.0)) throw std::invalid_argument("solve_value_function: tol must be positive");
    const auto t0 = std::chrono::steady_clock::now();
    const double kappa = contraction_modulus(model);
    const double scale = value_scale(model);
    const std::size_t cap = opt.max_iterations ? opt.max_iterations : default_iteration_cap(kappa, opt.tol, scale);
    const std::size_t m = model.size();

    auto lower = detail::iterate_P(model, RegimeFunction::constant(grid, m, 0.0), StartSide::lower, opt, kappa, cap);

    ValueSolution sol(std::move(lower.out.value));
    sol.thresholds = std::move(lower.out.thresholds);
    sol.slopes = std::move(lower.out.slopes);
    sol.iterations = lower.iterations;
    sol.last_step = lower.last_step;
    sol.kappa = kappa;
    sol.error_bound = kappa / (1.0 - kappa) * lower.last_step;
    sol.confirmation_sweeps = lower.confirmation_sweeps;

    if (opt.two_sided) {
        auto upper = detail::iterate_P(model, RegimeFunction::constant(grid, m, value_upper_bound(model)),
                                       StartSide::upper, opt, kappa, cap);
        sol.upper_iterations = upper.iterations;
        sol.bracket_gap = sup_norm_distance(sol.v, upper.out.value);
        if (sol.bracket_gap > 2.0 * opt.tol)
            throw NumericalError("iterations from 0 and from the upper bound disagree by " +
                                 std::to_string(sol.bracket_gap) + " > 2 tol");
    }

    sol.class_report = check_class_D(sol.v, model);
    if (!sol.class_report.in_D) {
        const auto& v = sol.class_report.violations.front();
        throw NumericalError("converged value function fails class D: " + v.property + " in regime " +
                             model.regimes[v.regime].name + " at node " + std::to_string(v.node) +
                             " (magnitude " + std::to_string(v.magnitude) + ")");
    }
    sol.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return sol;
}

inline ValueSolution solve_value_function(const RegimeModel& model, double tol) {
    FixedPointOptions opt;
    opt.tol = tol;
    return solve_value_function(model, Grid(default_x_max(model), kDefaultGridCells), opt);
}

// ---------------------------------------------------------------------------
// HJB audit

/// Third-order one-sided estimate of v'(0+) from node values only.
inline double boundary_slope_estimate(const std::vector<double>& v, double h) {
    return (-11.0 * v[0] + 18.0 * v[1] - 9.0 * v[2] + 2.0 * v[3]) / (6.0 * h);
}

/// r(x,i) = max{ (s^2/2) D2v + mu Dv - (delta_i+q_i) v + sum_{j!=i} q_ij v_j
///               + max(0, l (1/(1+d) - Dv)),  Dv - 1/(1-c) }
/// with central differences at interior nodes; boundary entries are 0.
inline std::vector<std::vector<double>> hjb_residual(const RegimeModel& model, const RegimeFunction& v) {
    const Grid& g = v.grid();
    const double h = g.h();
    const std::size_t n = g.nodes();
    std::vector<std::vector<double>> res(model.size(), std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < model.size(); ++i) {
        const double rate = model.delta(i) + model.q_out(i);
        for (std::size_t k = 1; k + 1 < n; ++k) {
            const double x = g.x(k);
            const double s = model.sigma(x, i);
            const double d1 = (v.at(k + 1, i) - v.at(k - 1, i)) / (2.0 * h);
            const double d2 = (v.at(k + 1, i) - 2.0 * v.at(k, i) + v.at(k - 1, i)) / (h * h);
            double coupling = 0.0;
            for (std::size_t j = 0; j < model.size(); ++j)
                if (j != i) coupling += model.q(i, j) * v.at(k, j);
            const double first = 0.5 * s * s * d2 + model.mu(x, i) * d1 - rate * v.at(k, i) + coupling +
                                 std::max(0.0, model.l_bar * (model.payout_price() - d1));
            res[i][k] = std::max(first, d1 - model.injection_price());
        }
    }
    return res;
}

struct HjbAudit {
    double max_abs_residual = 0.0;
    std::size_t worst_regime = 0;
    std::size_t worst_node = 0;
    std::size_t region_violations = 0;
    double worst_region_excess = 0.0;
    std::vector<std::vector<double>> residual;
};

/// Residual max excluding nodes within `exclude_cells` of each threshold, and
/// slope-region consistency Dv <= 1/(1+d) (x >= b), Dv >= 1/(1+d) (x < b).
inline HjbAudit hjb_audit(const RegimeModel& model, const RegimeFunction& v, const std::vector<ThresholdResult>& th,
                          std::size_t exclude_cells = 2, double slope_tol = 1e-6) {
    HjbAudit a;
    a.residual = hjb_residual(model, v);
    const std::size_t n = v.grid().nodes();
    const double target = model.payout_price();
    for (std::size_t i = 0; i < model.size(); ++i) {
        const std::size_t bn = th.at(i).node;
        for (std::size_t k = 1; k + 1 < n; ++k) {
            const std::size_t dist = k > bn ? k - bn : bn - k;
            if (dist <= exclude_cells) continue;
            const double r = std::abs(a.residual[i][k]);
            if (r > a.max_abs_residual) {
                a.max_abs_residual = r;
                a.worst_regime = i;
                a.worst_node = k;
            }
        }
        for (std::size_t k = 0; k < n; ++k) {
            const double dv = node_slope(v[i], v.grid().h(), k);
            const double excess = k >= bn ? dv - (target + slope_tol) : (target - slope_tol) - dv;
            if (excess > 0.0) {
                ++a.region_violations;
                a.worst_region_excess = std::max(a.worst_region_excess, excess);
            }
        }
    }
    return a;
}

}  // namespace divswitch
