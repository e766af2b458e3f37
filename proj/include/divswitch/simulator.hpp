#pragma once

// Monte Carlo estimate of the return functional
//
//   E[ int_0^T e^{-Lambda_t} l_t/(1+d) dt - int_0^T e^{-Lambda_t}/(1-c) dC_t ]
//
// under a threshold strategy: pay l_bar while X >= b_xi, inject the minimal
// amount that keeps X >= 0. Regime holding times are exact exponentials; a
// switch inside an Euler step splits the step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "divswitch/errors.hpp"
#include "divswitch/model.hpp"
#include "divswitch/parallel.hpp"
#include "divswitch/rng.hpp"

namespace divswitch {

struct StrategySpec {
    std::vector<double> thresholds;
};

enum class Reflection {
    /// Skorokhod reflection of the frozen-coefficient step using the exact
    /// minimum of the Brownian bridge between the two step endpoints.
    bridge,
    /// Inject -X_pred whenever the Euler prediction is negative.
    euler,
};

struct SimParams {
    std::size_t paths = 100000;
    double dt = 1e-3;
    double horizon = 0.0;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    Reflection reflection = Reflection::bridge;
};

struct SimEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t paths = 0;
    double horizon = 0.0;
    double dt = 0.0;
    double tail_bias_bound = 0.0;
    /// Dividend part of tail_bias_bound (rigorous).
    double tail_bias_dividends = 0.0;
    /// Injection part of tail_bias_bound (heuristic x_scale).
    double tail_bias_injections = 0.0;
};

struct PathOutcome {
    double dividends = 0.0;
    double injection_costs = 0.0;
    double value = 0.0;
    double min_surplus = std::numeric_limits<double>::infinity();
    std::size_t switches = 0;
};

/// One sub-step record for path audits.
struct LedgerEntry {
    double t;
    std::size_t regime;
    double x_after;
    double dividend;
    double injection_cost;
};

/// Discounted expected injection of a reflected Brownian motion with drift
/// -l_bar and volatility sigma(0, i), maximized over regimes.
inline double injection_scale(const RegimeModel& model) {
    const double dmin = model.min_delta();
    double s = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const double sig = model.sigma(0.0, i);
        s = std::max(s, sig * sig / (model.l_bar + std::sqrt(model.l_bar * model.l_bar + 2.0 * sig * sig * dmin)));
    }
    return s;
}

inline void fill_tail_bias(const RegimeModel& model, SimEstimate& est) {
    const double dmin = model.min_delta();
    const double decay = std::exp(-dmin * est.horizon);
    est.tail_bias_dividends = model.l_bar * decay / ((1.0 + model.cost_d) * dmin);
    est.tail_bias_injections = injection_scale(model) * decay / (1.0 - model.cost_c);
    est.tail_bias_bound = est.tail_bias_dividends + est.tail_bias_injections;
}

namespace detail {

enum : std::uint32_t { kStreamStep = 0, kStreamSwitch = 1, kStreamPiece = 2 };

class PathEngine {
public:
    PathEngine(const RegimeModel& model, const StrategySpec& strategy, const SimParams& params)
        : model_(model), strategy_(strategy), params_(params), key_(philox_key(params.seed)) {
        const std::size_t m = model.size();
        if (m == 0) throw std::invalid_argument("simulate: model has no regimes");
        if (strategy.thresholds.size() != m) throw std::invalid_argument("simulate: one threshold per regime required");
        for (double b : strategy.thresholds)
            if (!(b >= 0.0) || !std::isfinite(b)) throw std::invalid_argument("simulate: thresholds must be finite and >= 0");
        if (!(params.dt > 0.0) || !(params.horizon > 0.0) || params.paths < 1)
            throw std::invalid_argument("simulate: need dt > 0, horizon > 0, paths >= 1");
        double qmax = 0.0;
        for (std::size_t i = 0; i < m; ++i) qmax = std::max(qmax, model.q_out(i));
        if (params.dt * qmax > 0.1)
            throw std::invalid_argument("simulate: dt * max_i q_i = " + std::to_string(params.dt * qmax) + " exceeds 0.1");
        steps_ = static_cast<std::uint64_t>(std::ceil(params.horizon / params.dt - 1e-9));
        if (steps_ >= (std::uint64_t{1} << 32)) throw std::invalid_argument("simulate: too many steps");
        step_decay_.resize(m);
        for (std::size_t i = 0; i < m; ++i) step_decay_[i] = std::exp(-model.delta(i) * params.dt);
        sqrt_dt_ = std::sqrt(params.dt);
        payout_ = model.payout_price();
        injection_ = model.injection_price();
    }

    PathOutcome run(std::uint64_t path, double x0, std::size_t i0, std::vector<LedgerEntry>* ledger = nullptr) const {
        PathOutcome out;
        const auto plo = static_cast<std::uint32_t>(path), phi = static_cast<std::uint32_t>(path >> 32);
        double x = x0;
        std::size_t regime = i0;
        double discount = 1.0;
        std::uint32_t switch_idx = 0;
        double next_switch = holding_time(regime, plo, phi, switch_idx);
        out.min_surplus = x;

        PhiloxCounter block{};
        const double dt = params_.dt;
        for (std::uint64_t s = 0; s < steps_; ++s) {
            const double t0 = static_cast<double>(s) * dt;
            const double t1 = std::min(static_cast<double>(s + 1) * dt, params_.horizon);
            const bool odd = (s & 1u) != 0;
            if (!odd) block = philox4x32_10({plo, phi, static_cast<std::uint32_t>(s >> 1), kStreamStep}, key_);
            double z = normal_quantile(to_open_unit(odd ? block[2] : block[0]));
            double u = to_open_unit(odd ? block[3] : block[1]);

            double t = t0;
            std::uint32_t piece = 0;
            while (t < t1) {
                const bool switching = next_switch <= t1;
                const bool full_step = !switching && piece == 0 && t1 - t0 >= dt * (1.0 - 1e-12);
                double tau = full_step ? dt : t1 - t;
                if (switching) tau = std::max(0.0, next_switch - t);
                if (piece > 0) {
                    const auto extra = philox4x32_10(
                        {plo, phi, static_cast<std::uint32_t>(s), kStreamPiece + 4u * piece}, key_);
                    z = normal_quantile(to_open_unit(extra[0]));
                    u = to_open_unit(extra[1]);
                }
                const double decay = full_step ? step_decay_[regime] : std::exp(-model_.delta(regime) * tau);
                advance(x, regime, tau, full_step ? sqrt_dt_ : std::sqrt(tau), z, u, discount, decay, out);
                t += tau;
                if (ledger) ledger->push_back({t, regime, x, last_dividend_, last_injection_});
                ++piece;
                if (switching) {
                    t = std::max(t, next_switch);
                    regime = switch_target(regime, plo, phi, switch_idx);
                    ++switch_idx;
                    ++out.switches;
                    next_switch = t + holding_time(regime, plo, phi, switch_idx);
                } else {
                    break;
                }
            }
        }
        out.value = out.dividends - out.injection_costs;
        if (!std::isfinite(out.value))
            throw NumericalError("simulate: non-finite path value (seed " + std::to_string(params_.seed) + ", path " +
                                 std::to_string(path) + ")");
        return out;
    }

private:
    void advance(double& x, std::size_t regime, double tau, double sqrt_tau, double z, double u, double& discount, double decay,
                 PathOutcome& out) const {
        const bool paying = x >= strategy_.thresholds[regime];
        const double rate = paying ? model_.l_bar : 0.0;
        const double sig = model_.sigma(x, regime);
        const double drift = model_.mu(x, regime) - rate;
        last_dividend_ = rate * discount * tau * payout_;
        out.dividends += last_dividend_;

        const double y = x + drift * tau + sig * sqrt_tau * z;
        double inj = 0.0;
        if (params_.reflection == Reflection::euler) {
            inj = std::max(0.0, -y);
        } else {
            const double var = sig * sig * tau;
            // P(bridge min < 0) = exp(-2xy/var); below e^{-40} it is skipped.
            // Crossing needs -log u > 2xy/var; -log u <= (1-u)/u rejects most
            // steps without the logarithm.
            if (y <= 0.0 || (x * y < 20.0 * var && u * (1.0 + 2.0 * x * y / var) < 1.0)) {
                const double lo = 0.5 * (x + y - std::sqrt((y - x) * (y - x) - 2.0 * var * std::log(u)));
                inj = std::max(0.0, -lo);
            }
        }
        x = std::max(0.0, y + inj);
        discount *= decay;
        last_injection_ = inj * discount * injection_;
        out.injection_costs += last_injection_;
        out.min_surplus = std::min(out.min_surplus, x);
    }

    double holding_time(std::size_t regime, std::uint32_t plo, std::uint32_t phi, std::uint32_t idx) const {
        const double q = model_.q_out(regime);
        if (q <= 0.0) return std::numeric_limits<double>::infinity();
        const auto r = philox4x32_10({plo, phi, idx, kStreamSwitch}, key_);
        return -std::log(to_open_unit(r[0])) / q;
    }

    std::size_t switch_target(std::size_t regime, std::uint32_t plo, std::uint32_t phi, std::uint32_t idx) const {
        const auto r = philox4x32_10({plo, phi, idx, kStreamSwitch}, key_);
        const double q = model_.q_out(regime);
        const double target = to_open_unit(r[1]) * q;
        double acc = 0.0;
        std::size_t last = regime;
        for (std::size_t j = 0; j < model_.size(); ++j) {
            if (j == regime || model_.q(regime, j) <= 0.0) continue;
            acc += model_.q(regime, j);
            last = j;
            if (target < acc) return j;
        }
        return last;
    }

    const RegimeModel& model_;
    const StrategySpec& strategy_;
    SimParams params_;
    PhiloxKey key_;
    std::uint64_t steps_ = 0;
    std::vector<double> step_decay_;
    double sqrt_dt_ = 0.0, payout_ = 0.0, injection_ = 0.0;
    mutable double last_dividend_ = 0.0;
    mutable double last_injection_ = 0.0;
};

}  // namespace detail

/// Simulates paths [0, params.paths) and returns each path's outcome in
/// path-index order, independent of params.workers.
inline std::vector<PathOutcome> simulate_paths(const RegimeModel& model, const StrategySpec& strategy, double x0,
                                               std::size_t i0, const SimParams& params) {
    if (!(x0 >= 0.0) || !std::isfinite(x0)) throw std::invalid_argument("simulate: x0 must be >= 0");
    if (i0 >= model.size()) throw std::invalid_argument("simulate: initial regime out of range");
    if (params.paths < 1) throw std::invalid_argument("simulate: need dt > 0, horizon > 0, paths >= 1");
    std::vector<PathOutcome> out(params.paths);
    const std::size_t workers = std::max<std::size_t>(params.workers, 1);
    const std::size_t chunks = std::min(params.paths, workers);
    // One engine per chunk: the engine carries per-step scratch state.
    parallel_for(chunks, workers, [&](std::size_t c) {
        const detail::PathEngine engine(model, strategy, params);
        const std::size_t begin = c * params.paths / chunks, end = (c + 1) * params.paths / chunks;
        for (std::size_t p = begin; p < end; ++p) out[p] = engine.run(p, x0, i0);
    });
    return out;
}

/// Path outcome with its sub-step ledger (for accounting audits).
inline PathOutcome simulate_path_with_ledger(const RegimeModel& model, const StrategySpec& strategy, double x0,
                                             std::size_t i0, const SimParams& params, std::uint64_t path,
                                             std::vector<LedgerEntry>& ledger) {
    const detail::PathEngine engine(model, strategy, params);
    return engine.run(path, x0, i0, &ledger);
}

/// Mean and standard error in fixed index order.
inline std::pair<double, double> mean_and_error(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double sum = 0.0;
    for (double y : v) sum += y;
    const double mean = sum / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double y : v) ss += (y - mean) * (y - mean);
    const double var = ss / static_cast<double>(v.size() - 1);
    return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

inline std::vector<double> path_values(const std::vector<PathOutcome>& paths) {
    std::vector<double> v(paths.size());
    for (std::size_t k = 0; k < paths.size(); ++k) v[k] = paths[k].value;
    return v;
}

inline SimEstimate summarize(const RegimeModel& model, const std::vector<double>& values, const SimParams& params) {
    SimEstimate est;
    std::tie(est.mean, est.std_error) = mean_and_error(values);
    est.paths = values.size();
    est.horizon = params.horizon;
    est.dt = params.dt;
    fill_tail_bias(model, est);
    return est;
}

inline SimEstimate simulate_return(const RegimeModel& model, const StrategySpec& strategy, double x0, std::size_t i0,
                                   const SimParams& params) {
    return summarize(model, path_values(simulate_paths(model, strategy, x0, i0, params)), params);
}

// ---------------------------------------------------------------------------
// Strategy comparison with common random numbers

struct LabelledStrategy {
    std::string label;
    StrategySpec strategy;
};

enum class Verdict { reference, ok, violation };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::reference: return "reference";
        case Verdict::ok: return "ok";
        case Verdict::violation: return "violation";
    }
    return "?";
}

struct DominanceRow {
    std::string label;
    std::vector<double> thresholds;
    SimEstimate estimate;
    /// mean(perturbed) - mean(optimal) and the SE of the paired difference.
    double diff_mean = 0.0;
    double diff_std_error = 0.0;
    /// sqrt(SE_opt^2 + SE_pert^2), the scale of the violation test.
    double combined_std_error = 0.0;
    Verdict verdict = Verdict::ok;
};

struct DominanceReport {
    std::vector<DominanceRow> rows;  // rows[0] is the optimal strategy
    std::size_t violations = 0;
};

/// Flags every perturbation whose mean exceeds the optimal mean by more than
/// 3 combined standard errors.
inline DominanceReport compare_strategies(const RegimeModel& model, const StrategySpec& optimal,
                                          const std::vector<LabelledStrategy>& perturbations, double x0,
                                          std::size_t i0, const SimParams& params) {
    if (perturbations.empty()) throw std::invalid_argument("compare_strategies: no perturbations");
    DominanceReport rep;
    const std::vector<double> ref = path_values(simulate_paths(model, optimal, x0, i0, params));
    DominanceRow base{"optimal", optimal.thresholds, summarize(model, ref, params)};
    base.verdict = Verdict::reference;
    rep.rows.push_back(base);
    for (const auto& p : perturbations) {
        const std::vector<double> vals = path_values(simulate_paths(model, p.strategy, x0, i0, params));
        DominanceRow row{p.label, p.strategy.thresholds, summarize(model, vals, params)};
        std::vector<double> diff(vals.size());
        for (std::size_t k = 0; k < vals.size(); ++k) diff[k] = vals[k] - ref[k];
        std::tie(row.diff_mean, row.diff_std_error) = mean_and_error(diff);
        row.combined_std_error = std::hypot(base.estimate.std_error, row.estimate.std_error);
        row.verdict = row.estimate.mean > base.estimate.mean + 3.0 * row.combined_std_error ? Verdict::violation : Verdict::ok;
        if (row.verdict == Verdict::violation) ++rep.violations;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

/// thresholds scaled by each factor, labelled "scale_<factor>".
inline std::vector<LabelledStrategy> scaled_perturbations(const StrategySpec& optimal, const std::vector<double>& scales,
                                                          bool include_zero) {
    std::vector<LabelledStrategy> out;
    for (double s : scales) {
        StrategySpec p = optimal;
        for (double& b : p.thresholds) b *= s;
        std::string label = std::to_string(s);
        label.erase(label.find_last_not_of('0') + 1);
        if (!label.empty() && label.back() == '.') label.pop_back();
        out.push_back({"scale_" + label, std::move(p)});
    }
    if (include_zero) out.push_back({"zero", StrategySpec{std::vector<double>(optimal.thresholds.size(), 0.0)}});
    return out;
}

}  // namespace divswitch
