#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "divopt/solver2d.hpp"

using namespace divopt;

namespace {

const ModelParams kParams{2.0, 1.0, 0.5, 0.5, 1.0, 0.05};

double max_abs_diff(const ValueField& a, const ValueField& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    return d;
}

struct Small {
    GridSpec grid;
    DiscreteHjb hjb;
    explicit Small(const ClaimLaw& law, double delta = 0.05, double x = 6.0)
        : grid(make_grid_for_window(kParams, delta, x, x)), hjb(kParams, law, grid) {}
};

}  // namespace

TEST(Solve, JacobiAndInPlaceReachTheSameFixedPoint) {
    const Small s(Exponential{0.6});
    SolveOptions in;
    in.rel_tol = 1e-13;
    SolveOptions ja = in;
    ja.mode = SweepMode::jacobi;
    const Solution2D a = solve(s.hjb, in);
    const Solution2D b = solve(s.hjb, ja);
    EXPECT_LT(a.report.iterations, b.report.iterations);
    // Both iterate upward from zero, so neither may pass the other's limit.
    // Jacobi stops a few hundred increments short of the fixed point.
    EXPECT_LT(max_abs_diff(a.value, b.value), 1e-8);
    for (std::size_t i = 0; i < a.value.data().size(); ++i)
        ASSERT_LE(b.value.data()[i], a.value.data()[i] + 1e-12);
}

TEST(Solve, ThreadedJacobiIsBitIdentical) {
    const Small s(Erlang2{6.0 / 7.0}, 0.05, 4.0);
    SolveOptions one;
    one.mode = SweepMode::jacobi;
    one.rel_tol = 1e-9;
    SolveOptions four = one;
    four.threads = 4;
    const Solution2D a = solve(s.hjb, one);
    const Solution2D b = solve(s.hjb, four);
    EXPECT_EQ(a.report.iterations, b.report.iterations);
    EXPECT_EQ(max_abs_diff(a.value, b.value), 0.0);
}

TEST(Solve, InPlaceIteratesStayBetweenJacobiIterateAndFixedPoint) {
    const Small s(Deterministic{29.0 / 12.0}, 0.05, 5.0);
    SolveOptions tight;
    tight.rel_tol = 1e-12;
    const Solution2D fixed = solve(s.hjb, tight);
    ValueField jac(s.grid, 0.0), jac_next(s.grid, 0.0), inp(s.grid, 0.0);
    std::vector<double> scratch;
    for (int sweep = 0; sweep < 40; ++sweep) {
        const ValueField before = inp;
        detail::jacobi_sweep(s.hjb, jac, jac_next);
        std::swap(jac, jac_next);
        detail::inplace_sweep(s.hjb, inp, scratch);
        for (std::size_t i = 0; i < inp.data().size(); ++i) {
            ASSERT_GE(inp.data()[i], before.data()[i]) << "sweep " << sweep;
            ASSERT_GE(inp.data()[i], jac.data()[i] - 1e-12) << "sweep " << sweep;
            ASSERT_LE(inp.data()[i], fixed.value.data()[i] + 1e-9) << "sweep " << sweep;
        }
    }
}

TEST(Solve, BoundsMonotonicityAndResidualOnConvergedFields) {
    for (const ClaimLaw& law : {ClaimLaw(Exponential{0.6}), ClaimLaw(Erlang2{6.0 / 7.0}), ClaimLaw(Deterministic{29.0 / 12.0})}) {
        const Small s(law);
        const Solution2D sol = solve(s.hjb);
        double vmax = 0.0;
        for (double v : sol.value.data()) vmax = std::max(vmax, v);
        const double slack = 1e-12 * (1.0 + vmax);
        const BoundViolations b = check_bounds(sol.value, kParams);
        EXPECT_LE(b.worst(), slack) << law.describe();
        EXPECT_EQ(sol.report.worst_decrease, 0.0);
        EXPECT_LE(residual_check(s.hjb, sol.value), 10.0 * sol.report.tolerance);
        EXPECT_DOUBLE_EQ(sol.report.residual, residual_check(s.hjb, sol.value));
    }
}

TEST(Solve, SweepCapRaisesNonConvergence) {
    const Small s(Exponential{0.6});
    SolveOptions opt;
    opt.max_sweeps = 3;
    opt.rel_tol = 1e-14;
    try {
        solve(s.hjb, opt);
        FAIL() << "expected NonConvergence";
    } catch (const NonConvergence& e) {
        EXPECT_GT(e.last_increment(), 0.0);
    }
    opt.rel_tol = 0.0;
    EXPECT_THROW(solve(s.hjb, opt), InvalidInput);
}

TEST(Solve, TruncationDoublingChangesLittle) {
    const GridSpec g = make_grid_for_window(kParams, 0.05, 8.0, 8.0);
    const GridSpec big = make_grid(kParams, 0.05, 2 * g.n_max, 2 * g.m_max);
    SolveOptions opt;
    opt.rel_tol = 1e-10;
    const Solution2D a = solve(DiscreteHjb(kParams, Exponential{0.6}, g), opt);
    const Solution2D b = solve(DiscreteHjb(kParams, Exponential{0.6}, big), opt);
    double d = 0.0;
    for (int n = 0; n <= g.n_max; ++n)
        for (int m = 0; m <= g.m_max; ++m) d = std::max(d, std::abs(a.value(n, m) - b.value(n, m)));
    EXPECT_LT(d, 100.0 * a.report.tolerance);
}

TEST(Solve, ExtendValueValidatesInput) {
    const Small s(Exponential{0.6}, 0.1, 3.0);
    const Solution2D sol = solve(s.hjb);
    EXPECT_THROW(extend_value(sol.value, {-0.1, 1.0}), InvalidInput);
    EXPECT_DOUBLE_EQ(extend_value(sol.value, {s.grid.x1(2), s.grid.x2(3)}), sol.value(2, 3));
}

TEST(Regions, NeighbourRuleOnHandBuiltPolicy) {
    const GridSpec g = make_grid(kParams, 0.1, 4, 4);
    PolicyField pol(g);
    const ActionSet e0(static_cast<std::uint8_t>(Action::E0));
    const ActionSet e1(static_cast<std::uint8_t>(Action::E1));
    const ActionSet e2(static_cast<std::uint8_t>(Action::E2));
    const ActionSet e12(static_cast<std::uint8_t>(static_cast<int>(Action::E1) | static_cast<int>(Action::E2)));
    const ActionSet e01(static_cast<std::uint8_t>(static_cast<int>(Action::E0) | static_cast<int>(Action::E1)));
    for (int n = 0; n <= 4; ++n)
        for (int m = 0; m <= 4; ++m) pol(n, m) = e0;
    pol(3, 1) = e1;   // right neighbour of (2, 1) pays E1
    pol(1, 3) = e2;   // upper neighbour of (1, 2) pays E2
    pol(3, 3) = e12;  // right neighbour of (2, 3)
    pol(2, 4) = e2;   // upper neighbour of (2, 3) pays E2
    pol(0, 4) = e01;  // explicit tie
    const RegionMap r = extract_regions(pol);
    EXPECT_EQ(r(3, 1), Region::B1);
    EXPECT_EQ(r(1, 3), Region::B2);
    EXPECT_EQ(r(3, 3), Region::B0);
    EXPECT_EQ(r(2, 1), Region::A1);
    EXPECT_EQ(r(1, 2), Region::A2);
    EXPECT_EQ(r(2, 3), Region::A0);
    EXPECT_EQ(r(0, 4), Region::A1);
    EXPECT_EQ(r(0, 0), Region::C);
    EXPECT_EQ(r.count(Region::A0), 1u);
    ASSERT_EQ(r.a0_points().size(), 1u);
    EXPECT_NEAR(r.a0_points()[0].x1, g.x1(2), 1e-12);
    EXPECT_NEAR(r.a0_points()[0].x2, g.x2(3), 1e-12);
}

TEST(Regions, ComponentsAreEightConnected) {
    const GridSpec g = make_grid(kParams, 0.1, 5, 5);
    RegionMap r(g);
    r(0, 0) = Region::B0;
    r(1, 1) = Region::B0;  // diagonal neighbour: same component
    r(4, 4) = Region::B0;
    r(4, 5) = Region::B0;
    EXPECT_EQ(r.components(Region::B0).size(), 2u);
    EXPECT_EQ(r.components(Region::A2).size(), 0u);
}

TEST(Regions, DiagonalSegmentsFollowTheE0Direction) {
    const GridSpec g = make_grid(kParams, 0.1, 10, 10);
    RegionMap r(g);
    for (int k = 0; k < 5; ++k) r(2 + k, 1 + k) = Region::A1;
    r(8, 2) = Region::A1;
    r(9, 3) = Region::A1;  // two-point run, below the default minimum
    const auto segs = r.a1_segments();
    ASSERT_EQ(segs.size(), 1u);
    EXPECT_EQ(segs[0].cells, 5);
    EXPECT_NEAR(segs[0].slope(), g.dx2 / g.dx1, 1e-12);
    EXPECT_NEAR(segs[0].horizontal_extent(), 4 * g.dx1, 1e-12);
    EXPECT_EQ(r.a1_segments(2).size(), 2u);
}

TEST(Checks, BoundViolationsAreDetected) {
    const GridSpec g = make_grid(kParams, 0.1, 5, 5);
    ValueField v(g);
    for (int n = 0; n <= 5; ++n)
        for (int m = 0; m <= 5; ++m) v(n, m) = g.x1(n) + g.x2(m) + 1.0;
    EXPECT_LE(check_bounds(v, kParams).worst(), 1e-12);
    v(2, 2) -= 2.0;
    const BoundViolations b = check_bounds(v, kParams);
    EXPECT_NEAR(b.lower, 1.0, 1e-12);
    EXPECT_GT(b.increment1, 0.0);
    EXPECT_GT(b.increment2, 0.0);
    v(2, 2) += 100.0;
    EXPECT_GT(check_bounds(v, kParams).upper, 0.0);
}

TEST(Checks, D1SamplesLieBelowM) {
    const ModelParams p{2.0, 1.0, 0.6, 0.4, 1.0, 0.05};
    const GridSpec g = make_grid_for_window(p, 0.05, 10.0, 10.0);
    const auto pts = sample_d1_points(g, p, 100, 4);
    ASSERT_EQ(pts.size(), 100u);
    for (const auto& x : pts) EXPECT_EQ(side_of_m(p, x), Side::d1);
}

TEST(Checks, D1IdentityHoldsOnConvergedField) {
    const Small s(Exponential{0.6}, 0.03, 8.0);
    const Solution2D sol = solve(s.hjb);
    const auto pts = sample_d1_points(s.grid, kParams, 100, 17);
    EXPECT_LE(check_D1_identity(sol.value, kParams, pts), 2.0 * (s.grid.dx1 + s.grid.dx2));
    EXPECT_THROW(check_D1_identity(sol.value, kParams, {{1.0, 5.0}}), InvalidInput);
}

TEST(Checks, SymmetricDiagonalMatchesOneDimensionalSolution) {
    const ModelParams p{21.4, 21.4, 0.5, 0.5, 10.0, 0.1};
    const ClaimLaw law = Erlang2{0.5};
    const GridSpec g = make_grid_for_window(p, 0.02, 25.0, 25.0);
    const Solution2D sol = solve(DiscreteHjb(p, law, g));
    const OneDimSolution w = solve_1d(make_auxiliary_problem(p, law, AuxKind::wbar), 0.02, 25.0);
    for (int k = 0; k <= std::min(g.n_max, w.j_max()); ++k)
        EXPECT_NEAR(sol.value(k, k), w.value[static_cast<std::size_t>(k)], 1e-6 * (1.0 + w.value[static_cast<std::size_t>(k)]));
    EXPECT_THROW(check_tilde_suboptimality(p, law, w), InvalidInput);
}
