#pragma once

// Return function of the threshold strategy pi^{0,b} for the one-switch
// problem with terminal payoff f: solves
//
//   (s^2/2) g'' + mu g' - (delta_i + q_i) g + sum_{j!=i} q_ij f(x,j) = 0          x < b
//   (s^2/2) g'' + (mu - l) g' - (delta_i + q_i) g + sum_{j!=i} q_ij f(x,j) = -l/(1+d)  x >= b
//
// with g'(0) = 1/(1-c) and g(x_max) = A_{f,i}, as one tridiagonal system on
// the grid of f. Matching at b is built into the global discretization.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "divswitch/errors.hpp"
#include "divswitch/funcspace.hpp"
#include "divswitch/model.hpp"
#include "divswitch/tridiagonal.hpp"

namespace divswitch {

struct ReturnSolution {
    std::vector<double> values;
    std::vector<double> slopes;
    double tail = 0.0;
    double slope_at_b = 0.0;
    double b = 0.0;
    std::size_t b_node = 0;
};

/// A_{f,i} = (l/(1+d) + sum_{j!=i} q_ij f(inf,j)) / (q_i + delta_i).
inline double tail_value(const RegimeModel& model, const RegimeFunction& f, std::size_t i) {
    double coupling = 0.0;
    for (std::size_t j = 0; j < model.size(); ++j)
        if (j != i) coupling += model.q(i, j) * f.at_infinity(j);
    return (model.l_bar * model.payout_price() + coupling) / (model.q_out(i) + model.delta(i));
}

/// Cell Peclet number above which the first-derivative term is upwinded;
/// at or below it the central stencil keeps the off-diagonals nonnegative.
inline constexpr double kPecletLimit = 2.0;

/// Fixed (model, f, regime) data shared by every b-solve.
class ReturnProblem {
public:
    ReturnProblem(const RegimeModel& model, const RegimeFunction& f, std::size_t regime)
        : grid_(f.grid()), regime_(regime), l_bar_(model.l_bar), payout_(model.l_bar * model.payout_price()),
          boundary_slope_(model.injection_price()) {
        if (regime >= model.size() || f.regimes() != model.size())
            throw std::invalid_argument("ReturnProblem: regime index or regime count mismatch");
        rate_ = model.delta(regime) + model.q_out(regime);
        tail_ = tail_value(model, f, regime);
        const std::size_t n = grid_.nodes();
        half_var_.resize(n);
        drift_.resize(n);
        coupling_.assign(n, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            const double x = grid_.x(k);
            const double s = model.sigma(x, regime);
            if (!(s >= kSigmaFloor)) throw NumericalError("ReturnProblem: volatility below floor at x=" + std::to_string(x));
            half_var_[k] = 0.5 * s * s;
            drift_[k] = model.mu(x, regime);
            for (std::size_t j = 0; j < model.size(); ++j)
                if (j != regime) coupling_[k] += model.q(regime, j) * f.at(k, j);
        }
    }

    const Grid& grid() const noexcept { return grid_; }
    std::size_t regime() const noexcept { return regime_; }
    double tail() const noexcept { return tail_; }
    double boundary_slope() const noexcept { return boundary_slope_; }

    /// Nearest node to b; b must lie in [0, x_max].
    std::size_t snap(double b) const {
        if (!(b >= 0.0 && b <= grid_.x_max()))
            throw std::out_of_range("threshold b=" + std::to_string(b) + " outside [0, x_max]");
        return grid_.nearest_node(b);
    }

    ReturnSolution solve(std::size_t b_node) const {
        const std::size_t n = grid_.nodes();
        std::vector<double> lo(n), di(n), up(n), rhs(n);
        for (std::size_t k = 0; k < n; ++k) {
            const Row r = row(k, b_node);
            lo[k] = r.lower;
            di[k] = r.diag;
            up[k] = r.upper;
            rhs[k] = r.rhs;
        }
        ReturnSolution sol;
        sol.values = solve_tridiagonal(lo, di, up, rhs);
        sol.slopes.resize(n);
        const double h = grid_.h();
        sol.slopes[0] = boundary_slope_;  // ghost-node central difference equals the imposed slope
        for (std::size_t k = 1; k + 1 < n; ++k) sol.slopes[k] = (sol.values[k + 1] - sol.values[k - 1]) / (2.0 * h);
        sol.slopes[n - 1] = (sol.values[n - 1] - sol.values[n - 2]) / h;
        sol.tail = tail_;
        sol.b_node = b_node;
        sol.b = grid_.x(b_node);
        sol.slope_at_b = sol.slopes[b_node];
        return sol;
    }

    ReturnSolution solve_at(double b) const { return solve(snap(b)); }

    /// Residual of the discrete equations at every node (boundary rows included).
    std::vector<double> residual(const ReturnSolution& sol) const {
        const std::size_t n = grid_.nodes();
        std::vector<double> res(n);
        const auto& g = sol.values;
        for (std::size_t k = 0; k < n; ++k) {
            const Row r = row(k, sol.b_node);
            double lhs = r.diag * g[k];
            if (k > 0) lhs += r.lower * g[k - 1];
            if (k + 1 < n) lhs += r.upper * g[k + 1];
            res[k] = lhs - r.rhs;
        }
        return res;
    }

    /// True where the drift term falls back to the upwind stencil.
    bool upwinded(std::size_t k, std::size_t b_node) const {
        const double m = drift_[k] - (k >= b_node ? l_bar_ : 0.0);
        return std::abs(m) * grid_.h() > kPecletLimit * half_var_[k];
    }

private:
    struct Row {
        double lower = 0.0, diag = 0.0, upper = 0.0, rhs = 0.0;
    };

    Row row(std::size_t k, std::size_t b_node) const {
        const std::size_t last = grid_.cells();
        Row r;
        if (k == last) {
            r.diag = 1.0;
            r.rhs = tail_;
            return r;
        }
        const double h = grid_.h();
        // The b node carries half the payout so the switch sits at x_b itself.
        const double w = k > b_node ? 1.0 : (k == b_node ? (k == 0 ? 1.0 : 0.5) : 0.0);
        const double a = half_var_[k];
        const double m = drift_[k] - w * l_bar_;
        const double src = coupling_[k] + w * payout_;
        const double d2 = a / (h * h);
        if (k == 0) {
            // Ghost node g_{-1} = g_1 - 2 h s enforces g'(0) = s.
            const double s = boundary_slope_;
            r.upper = 2.0 * d2;
            r.diag = -2.0 * d2 - rate_;
            r.rhs = -src + 2.0 * a * s / h;
            if (std::abs(m) * h <= kPecletLimit * a) {
                r.rhs -= m * s;
            } else if (m > 0.0) {
                // Drift-dominated: the boundary layer is thinner than h, so
                // the drift term takes the forward difference.
                r.upper += m / h;
                r.diag -= m / h;
            } else {
                // Backward difference through the ghost node.
                r.upper -= m / h;
                r.diag += m / h;
                r.rhs -= 2.0 * m * s;
            }
            return r;
        }
        r.lower = d2;
        r.upper = d2;
        r.diag = -2.0 * d2 - rate_;
        if (std::abs(m) * h <= kPecletLimit * a) {
            r.lower -= m / (2.0 * h);
            r.upper += m / (2.0 * h);
        } else if (m > 0.0) {
            r.upper += m / h;
            r.diag -= m / h;
        } else {
            r.lower -= m / h;
            r.diag += m / h;
        }
        r.rhs = -src;
        return r;
    }

    Grid grid_;
    std::size_t regime_;
    double l_bar_;
    double payout_;
    double boundary_slope_;
    double rate_ = 0.0;
    double tail_ = 0.0;
    std::vector<double> half_var_;
    std::vector<double> drift_;
    std::vector<double> coupling_;
};

inline ReturnSolution solve_return_function(const RegimeModel& model, const RegimeFunction& f, std::size_t i,
                                            double b) {
    const ReturnProblem p(model, f, i);
    return p.solve_at(b);
}

/// h_{f,i}(b) = R'_{f,pi^{0,b}}(b, i) at the snapped node.
inline double threshold_slope(const RegimeModel& model, const RegimeFunction& f, std::size_t i, double b) {
    return solve_return_function(model, f, i, b).slope_at_b;
}

}  // namespace divswitch
