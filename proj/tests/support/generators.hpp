#pragma once

// Random grid functions in class D: nondecreasing, concave, slopes at most
// 1/(1-c), bounded by value_upper_bound.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "divswitch/funcspace.hpp"
#include "divswitch/model.hpp"

namespace testing_support {

inline std::vector<double> random_class_d_values(std::mt19937_64& rng, const divswitch::Grid& g,
                                                 const divswitch::RegimeModel& m) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double bound = divswitch::value_upper_bound(m);
    const double h = g.h();
    // Slopes decay geometrically at a random rate; a random kink gives a
    // second derivative jump.
    double slope = u(rng) * m.injection_price();
    const double rate = 0.02 + 2.0 * u(rng);
    const std::size_t kink = static_cast<std::size_t>(u(rng) * static_cast<double>(g.cells()));
    const double drop = u(rng);
    std::vector<double> v(g.nodes());
    v[0] = 0.6 * bound * u(rng);
    for (std::size_t k = 1; k < g.nodes(); ++k) {
        v[k] = v[k - 1] + slope * h;
        slope *= std::exp(-rate * h);
        if (k == kink) slope *= drop;
    }
    const double top = v.back();
    if (top > bound) {
        const double s = bound / top;
        for (double& x : v) x *= s;
    }
    return v;
}

inline divswitch::RegimeFunction random_class_d(std::mt19937_64& rng, const divswitch::Grid& g,
                                                const divswitch::RegimeModel& m) {
    std::vector<std::vector<double>> vals;
    for (std::size_t i = 0; i < m.size(); ++i) vals.push_back(random_class_d_values(rng, g, m));
    return divswitch::RegimeFunction(g, std::move(vals));
}

/// lambda * f with lambda in [0, 1]: stays in D and lies below f.
inline divswitch::RegimeFunction shrink(const divswitch::RegimeFunction& f, double lambda) {
    std::vector<std::vector<double>> vals;
    for (std::size_t i = 0; i < f.regimes(); ++i) {
        std::vector<double> v = f[i];
        for (double& x : v) x *= lambda;
        vals.push_back(std::move(v));
    }
    return divswitch::RegimeFunction(f.grid(), std::move(vals));
}

}  // namespace testing_support
