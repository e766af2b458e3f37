#include <gtest/gtest.h>

#include <random>

#include "../support/closed_form.hpp"
#include "../support/generators.hpp"
#include "../support/instances.hpp"
#include "divswitch/fixedpoint.hpp"
#include "divswitch/threshold.hpp"

using namespace divswitch;

namespace {

Grid default_grid(const RegimeModel& m) { return Grid(default_x_max(m), kDefaultGridCells); }

}  // namespace

TEST(FindThreshold, FrictionlessIsZero) {
    const RegimeModel m = testing_support::single(0.3, 1.0, 0.1, 0.0, 0.0, 1.0);
    const Grid g = default_grid(m);
    const ThresholdResult r = find_threshold(m, RegimeFunction::constant(g, 1, 0.0), 0);
    EXPECT_EQ(r.boundary_case, BoundaryCase::zero_threshold);
    EXPECT_EQ(r.b, 0.0);
    EXPECT_LE(r.slope_at_b, m.payout_price() + 1e-6);
}

TEST(FindThreshold, BrownianMatchesClosedForm) {
    const RegimeModel m = testing_support::brownian();
    const Grid g = default_grid(m);
    const ThresholdResult r = find_threshold(m, RegimeFunction::constant(g, 1, 0.0), 0);
    const double exact = oracle::ClosedForm(testing_support::kBrownian).optimal_threshold();
    EXPECT_EQ(r.boundary_case, BoundaryCase::interior);
    EXPECT_LE(std::abs(r.b - exact), std::max(g.h(), 1e-2));
}

TEST(FindThreshold, BracketsTheSlopeCondition) {
    std::mt19937_64 rng(8);
    const RegimeModel m = testing_support::three_regime();
    const Grid g = default_grid(m);
    const double target = m.payout_price();
    for (int t = 0; t < 6; ++t) {
        const auto f = testing_support::random_class_d(rng, g, m);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const ReturnProblem p(m, f, i);
            const ThresholdResult r = find_threshold(p, target);
            ASSERT_NE(r.boundary_case, BoundaryCase::capped_at_xmax);
            if (r.boundary_case == BoundaryCase::zero_threshold) {
                EXPECT_LE(p.solve(0).slope_at_b, target + 1e-6);
                continue;
            }
            // Leftmost node meeting the condition: the node before fails it.
            EXPECT_LE(r.slope_at_b, target + 1e-6);
            EXPECT_GT(r.slope_left, target + 1e-6);
            EXPECT_DOUBLE_EQ(p.solve(r.node - 1).slope_at_b, r.slope_left);
            if (r.node >= 8) { EXPECT_GT(p.solve(r.node - 8).slope_at_b, target + 1e-6); }
            // Snapping error is a fraction of the per-cell slope change.
            EXPECT_LE(std::abs(r.slope_at_b - target), r.slope_left - r.slope_at_b + 1e-6);
        }
    }
}

TEST(FindThreshold, AgreesWithBruteForceArgmax) {
    const RegimeModel m = testing_support::brownian();
    const Grid g = default_grid(m);
    std::mt19937_64 rng(12);
    const auto f = RegimeFunction::constant(g, 1, 0.0);
    const ReturnProblem p(m, f, 0);
    const ThresholdResult r = find_threshold(p, m.payout_price());
    for (double x0 : {0.0, 0.5, 3.0}) {
        const std::size_t k0 = g.nearest_node(x0);
        std::size_t best = 0;
        double best_v = -1.0;
        for (std::size_t bn = 0; bn <= 200; ++bn) {
            const double v = p.solve(bn).values[k0];
            if (v > best_v) {
                best_v = v;
                best = bn;
            }
        }
        EXPECT_LE(std::abs(g.x(best) - r.b), g.h() + 1e-12) << "x0=" << x0;
    }
}

TEST(FindThreshold, DominatesOtherThresholdsPointwise) {
    std::mt19937_64 rng(31);
    const RegimeModel m = testing_support::three_regime();
    const Grid g = default_grid(m);
    const double scale = value_scale(m);
    const auto f = testing_support::random_class_d(rng, g, m);
    std::uniform_int_distribution<std::size_t> node(0, 400);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const ReturnProblem p(m, f, i);
        const ThresholdResult r = find_threshold(p, m.payout_price());
        const ReturnSolution best = p.solve(r.node);
        for (int t = 0; t < 10; ++t) {
            std::size_t other = node(rng);
            if (other == r.node) ++other;
            const ReturnSolution alt = p.solve(other);
            for (std::size_t k = 0; k < g.nodes(); ++k) ASSERT_GE(best.values[k], alt.values[k] - 1e-8 * scale);
        }
    }
}

TEST(FindThreshold, Deterministic) {
    const RegimeModel m = testing_support::three_regime();
    const Grid g = default_grid(m);
    std::mt19937_64 rng(4);
    const auto f = testing_support::random_class_d(rng, g, m);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const ThresholdResult a = find_threshold(m, f, i), b = find_threshold(m, f, i);
        EXPECT_EQ(a.node, b.node);
        EXPECT_EQ(a.slope_at_b, b.slope_at_b);
    }
}

TEST(FindThreshold, CappedWhenDomainTooShort) {
    const RegimeModel m = testing_support::brownian();
    const Grid g(0.5, 200);
    const ThresholdResult r = find_threshold(m, RegimeFunction::constant(g, 1, 0.0), 0);
    EXPECT_EQ(r.boundary_case, BoundaryCase::capped_at_xmax);
    EXPECT_EQ(r.b, 0.5);
    EXPECT_THROW(apply_P(m, RegimeFunction::constant(g, 1, 0.0)), ThresholdCapped);
}

TEST(FindThreshold, CoarserBTolStopsEarlier) {
    const RegimeModel m = testing_support::brownian();
    const Grid g = default_grid(m);
    const ReturnProblem p(m, RegimeFunction::constant(g, 1, 0.0), 0);
    ThresholdOptions opt;
    const ThresholdResult fine = find_threshold(p, m.payout_price(), opt);
    opt.b_tol = 4.0 * g.h();
    const ThresholdResult coarse = find_threshold(p, m.payout_price(), opt);
    EXPECT_LE(coarse.slope_evaluations, fine.slope_evaluations);
    EXPECT_GE(coarse.node, fine.node);
    EXPECT_LE(coarse.node - fine.node, 4u);
}
