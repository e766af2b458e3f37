#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "divswitch/errors.hpp"

namespace divswitch {

/// Thomas elimination for lower[k] x[k-1] + diag[k] x[k] + upper[k] x[k+1] = rhs[k].
/// lower[0] and upper[n-1] are ignored. No pivoting: intended for the
/// diagonally dominant M-matrices produced by the return-function stencil.
inline std::vector<double> solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                                             std::span<const double> upper, std::span<const double> rhs) {
    const std::size_t n = diag.size();
    if (lower.size() != n || upper.size() != n || rhs.size() != n || n == 0)
        throw NumericalError("tridiagonal: inconsistent sizes");
    std::vector<double> c(n), x(n);
    double beta = diag[0];
    if (!(std::abs(beta) > 0.0) || !std::isfinite(beta)) throw NumericalError("tridiagonal: zero pivot at row 0");
    c[0] = n > 1 ? upper[0] / beta : 0.0;
    x[0] = rhs[0] / beta;
    for (std::size_t k = 1; k < n; ++k) {
        beta = diag[k] - lower[k] * c[k - 1];
        if (!(std::abs(beta) > 1e-300) || !std::isfinite(beta))
            throw NumericalError("tridiagonal: singular system, pivot " + std::to_string(beta) + " at row " +
                                 std::to_string(k));
        c[k] = k + 1 < n ? upper[k] / beta : 0.0;
        x[k] = (rhs[k] - lower[k] * x[k - 1]) / beta;
    }
    for (std::size_t k = n - 1; k-- > 0;) x[k] -= c[k] * x[k + 1];
    return x;
}

}  // namespace divswitch
