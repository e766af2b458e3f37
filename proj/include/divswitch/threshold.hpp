#pragma once

// b_i^f = inf{ b >= 0 : R'_{f,pi^{0,b}}(b, i) <= 1/(1+d) }, realized on the
// grid as the leftmost node satisfying the slope condition.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "divswitch/odesolver.hpp"

namespace divswitch {

enum class BoundaryCase { zero_threshold, interior, capped_at_xmax };

inline const char* to_string(BoundaryCase c) {
    switch (c) {
        case BoundaryCase::zero_threshold: return "zero_threshold";
        case BoundaryCase::interior: return "interior";
        case BoundaryCase::capped_at_xmax: return "capped_at_xmax";
    }
    return "?";
}

struct ThresholdResult {
    double b = 0.0;
    std::size_t node = 0;
    BoundaryCase boundary_case = BoundaryCase::zero_threshold;
    double slope_at_b = 0.0;
    /// Slope with the threshold one node to the left (above target unless zero_threshold).
    double slope_left = 0.0;
    std::size_t slope_evaluations = 0;
};

struct ThresholdOptions {
    std::size_t scan_step = 8;
    double slope_tol = 1e-6;
    /// Bisection stops once the bracket is at most this wide; 0 means one cell.
    double b_tol = 0.0;
};

inline ThresholdResult find_threshold(const ReturnProblem& problem, double target, const ThresholdOptions& opt = {}) {
    const Grid& grid = problem.grid();
    const std::size_t last = grid.cells();
    const std::size_t step = std::max<std::size_t>(opt.scan_step, 1);
    ThresholdResult res;
    auto excess = [&](std::size_t node) {
        ++res.slope_evaluations;
        return problem.solve(node).slope_at_b - target;
    };

    const double e0 = excess(0);
    if (e0 <= opt.slope_tol) {
        res.b = 0.0;
        res.node = 0;
        res.boundary_case = BoundaryCase::zero_threshold;
        res.slope_at_b = e0 + target;
        res.slope_left = res.slope_at_b;
        return res;
    }

    std::size_t lo = 0, hi = 0;
    double e_lo = e0, e_hi = e0;
    bool found = false;
    for (std::size_t k = step;; k += step) {
        const std::size_t node = std::min(k, last);
        const double e = excess(node);
        if (e <= opt.slope_tol) {
            hi = node;
            e_hi = e;
            found = true;
            break;
        }
        lo = node;
        e_lo = e;
        if (node == last) break;
    }
    if (!found) {
        res.b = grid.x_max();
        res.node = last;
        res.boundary_case = BoundaryCase::capped_at_xmax;
        res.slope_at_b = e_lo + target;
        res.slope_left = res.slope_at_b;
        return res;
    }

    const auto min_width = static_cast<std::size_t>(std::max(1.0, std::floor(opt.b_tol / grid.h())));
    while (hi - lo > min_width) {
        const std::size_t mid = lo + (hi - lo) / 2;
        const double e = excess(mid);
        if (e <= opt.slope_tol) {
            hi = mid;
            e_hi = e;
        } else {
            lo = mid;
            e_lo = e;
        }
    }
    res.node = hi;
    res.b = grid.x(hi);
    res.boundary_case = BoundaryCase::interior;
    res.slope_at_b = e_hi + target;
    res.slope_left = hi - lo == 1 ? e_lo + target : excess(hi - 1) + target;
    return res;
}

inline ThresholdResult find_threshold(const RegimeModel& model, const RegimeFunction& f, std::size_t i,
                                      const ThresholdOptions& opt = {}) {
    const ReturnProblem problem(model, f, i);
    return find_threshold(problem, model.payout_price(), opt);
}

}  // namespace divswitch
