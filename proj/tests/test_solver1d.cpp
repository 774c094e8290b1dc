#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "divopt/solver1d.hpp"
#include "divopt/solver2d.hpp"

using namespace divopt;

namespace {

const ModelParams kEx1{2.0, 1.0, 0.5, 0.5, 1.0, 0.05};
const ModelParams kSym{21.4, 21.4, 0.5, 0.5, 10.0, 0.1};

double simpson(auto&& f, double a, double b, int panels) {
    const double h = (b - a) / panels;
    double s = 0.0;
    for (int i = 0; i <= panels; ++i) s += (i == 0 || i == panels ? 1.0 : (i % 2 ? 4.0 : 2.0)) * f(a + i * h);
    return s * h / 3.0;
}

// Plain Jacobi iteration of the 1D scheme with the claim term integrated by
// nested Simpson over (t, U) for an exponential claim density. Shares no
// code with the library's kernel or sweep.
std::vector<double> brute_1d(const OneDimProblem& pr, double rate, double delta, int J) {
    const double dx = pr.c * delta;
    const double decay = std::exp(-(pr.q + pr.lambda) * delta);
    const double reward = pr.rho * pr.kappa * (1.0 - decay) / (pr.q + pr.lambda);
    auto dens = [&](double u) { return rate * std::exp(-rate * u); };
    // weight[k], dividend[k]: the claim drops the surplus by k cells.
    std::vector<double> weight(static_cast<std::size_t>(J) + 1), dividend(weight.size());
    for (int k = 0; k <= J; ++k) {
        auto inner = [&](double t, bool div) {
            const double y0 = k * dx + pr.c * t;  // surplus above the landing node, before the claim
            const double lo = std::max((y0 - dx) / pr.b, 0.0), hi = y0 / pr.b;
            if (!(hi > lo)) return 0.0;
            return simpson([&](double u) { return dens(u) * (div ? pr.rho * (y0 - pr.b * u) : 1.0); }, lo, hi, 200);
        };
        auto outer = [&](bool div) {
            return simpson([&](double t) { return pr.lambda * std::exp(-(pr.lambda + pr.q) * t) * inner(t, div); }, 0.0,
                           delta, 200);
        };
        weight[static_cast<std::size_t>(k)] = outer(false);
        dividend[static_cast<std::size_t>(k)] = outer(true);
    }
    std::vector<double> w(static_cast<std::size_t>(J) + 1, 0.0), next(w.size());
    for (int sweep = 0; sweep < 1000000; ++sweep) {
        double change = 0.0;
        for (int j = 0; j <= J; ++j) {
            const double up = j < J ? w[static_cast<std::size_t>(j) + 1] : w[static_cast<std::size_t>(J)] + pr.rho * dx;
            double t0 = decay * up + reward;
            for (int k = 0; k <= j; ++k) t0 += weight[static_cast<std::size_t>(k)] * w[static_cast<std::size_t>(j - k)] + dividend[static_cast<std::size_t>(k)];
            double best = t0;
            if (j > 0) best = std::max(best, w[static_cast<std::size_t>(j) - 1] + pr.rho * dx);
            next[static_cast<std::size_t>(j)] = best;
            change = std::max(change, std::abs(best - w[static_cast<std::size_t>(j)]));
        }
        std::swap(w, next);
        if (change < 1e-14) break;
    }
    return w;
}

}  // namespace

TEST(Problem, AuxiliaryConstructions) {
    const ClaimLaw law = Exponential{0.6};
    const OneDimProblem w = make_auxiliary_problem(kEx1, law, AuxKind::wbar);
    EXPECT_DOUBLE_EQ(w.c, 1.0);
    EXPECT_DOUBLE_EQ(w.b, 0.5);
    EXPECT_DOUBLE_EQ(w.rho, 2.0);
    EXPECT_DOUBLE_EQ(w.kappa, 0.5);
    const OneDimProblem m = make_auxiliary_problem(kEx1, law, AuxKind::merger);
    EXPECT_DOUBLE_EQ(m.c, 3.0);
    EXPECT_DOUBLE_EQ(m.b, 1.0);
    EXPECT_DOUBLE_EQ(m.rho, 1.0);
    EXPECT_DOUBLE_EQ(m.kappa, 0.0);
    EXPECT_DOUBLE_EQ(make_auxiliary_problem(kSym, Erlang2{0.5}, AuxKind::wbar).kappa, 0.0);
    OneDimProblem bad = w;
    bad.rho = 0.5;
    EXPECT_THROW(solve_1d(bad, 0.1, 5.0), InvalidInput);
    EXPECT_THROW(solve_1d(w, 0.0, 5.0), InvalidInput);
}

TEST(Solve1D, MatchesBruteForceJacobi) {
    for (AuxKind kind : {AuxKind::wbar, AuxKind::merger}) {
        const OneDimProblem pr = make_auxiliary_problem(kEx1, Exponential{0.6}, kind);
        const double delta = 0.05;
        Solve1DOptions opt;
        opt.rel_tol = 1e-13;
        opt.require_terminal_lump = false;
        const OneDimSolution sol = solve_1d(pr, delta, 60 * pr.c * delta, opt);
        const std::vector<double> ref = brute_1d(pr, 0.6, delta, sol.j_max());
        for (int j = 0; j <= sol.j_max(); ++j)
            EXPECT_NEAR(sol.value[static_cast<std::size_t>(j)], ref[static_cast<std::size_t>(j)], 1e-8 * (1.0 + ref[static_cast<std::size_t>(j)]))
                << "j = " << j;
    }
}

TEST(Solve1D, IncrementsBoundsAndMonotoneIterates) {
    for (const ClaimLaw& law : {ClaimLaw(Exponential{0.6}), ClaimLaw(Erlang2{6.0 / 7.0}), ClaimLaw(Deterministic{29.0 / 12.0})}) {
        const OneDimProblem pr = make_auxiliary_problem(kEx1, law, AuxKind::wbar);
        const OneDimSolution sol = solve_1d(pr, 0.02, 16.0);
        EXPECT_EQ(sol.report.worst_decrease, 0.0) << law.describe();
        EXPECT_LE(sol.report.residual, 10.0 * sol.report.tolerance);
        const double slack = 1e-12 * (1.0 + sol.value.back());
        for (int j = 0; j < sol.j_max(); ++j) {
            const double inc = sol.value[static_cast<std::size_t>(j) + 1] - sol.value[static_cast<std::size_t>(j)];
            ASSERT_GE(inc, pr.rho * sol.dx - slack) << law.describe() << " j = " << j;
        }
        for (int j = 0; j <= sol.j_max(); ++j)
            ASSERT_LE(sol.value[static_cast<std::size_t>(j)], pr.rho * (sol.x(j) + (pr.c + pr.kappa) / pr.q) + slack);
        EXPECT_EQ(sol.labels.back(), BandLabel::B);
    }
}

TEST(Solve1D, SymmetricGammaHasOneWaitingBand) {
    const OneDimProblem pr = make_auxiliary_problem(kSym, Erlang2{0.5}, AuxKind::wbar);
    const OneDimSolution sol = solve_1d(pr, 0.005, 40.0);
    const auto waiting = sol.bands.waiting();
    ASSERT_EQ(waiting.size(), 1u);
    EXPECT_NEAR(waiting[0].lo, 1.80, 0.15);
    EXPECT_NEAR(waiting[0].hi, 10.22, 0.15);
    EXPECT_EQ(sol.bands.breakpoints.size(), 2u);
    EXPECT_EQ(sol.bands.intervals.front().label, BandLabel::B);
    EXPECT_EQ(sol.bands.intervals.back().label, BandLabel::B);
}

TEST(Solve1D, TruncationInsideWaitingBandIsRejected) {
    const OneDimProblem pr = make_auxiliary_problem(kSym, Erlang2{0.5}, AuxKind::wbar);
    EXPECT_THROW(solve_1d(pr, 0.01, 5.0), TruncationTooSmall);
    Solve1DOptions opt;
    opt.require_terminal_lump = false;
    EXPECT_NO_THROW(solve_1d(pr, 0.01, 5.0, opt));
}

TEST(Solve1D, ImpatientCompanyApproachesTakeAndRun) {
    // With heavy discounting nothing is worth waiting for.
    const ModelParams p{2.0, 1.0, 0.5, 0.5, 1.0, 2.0};
    const ClaimLaw law = Exponential{0.6};
    double prev = kInf;
    for (double delta : {0.04, 0.02, 0.01}) {
        const OneDimSolution sol = solve_1d(make_auxiliary_problem(p, law, AuxKind::wbar), delta, 4.0);
        const TildeCheck tc = check_tilde_suboptimality(p, law, sol);
        EXPECT_FALSE(tc.applicable);
        EXPECT_LT(tc.linear_deviation, 0.6 * prev) << "delta = " << delta;
        prev = tc.linear_deviation;
    }
    EXPECT_LT(prev, 0.05);
}

TEST(Merger, DominatesTwoBranchValueWithoutCost) {
    const ClaimLaw law = Exponential{0.6};
    const GridSpec g = make_grid_for_window(kEx1, 0.05, 8.0, 8.0);
    const Solution2D sol = solve(DiscreteHjb(kEx1, law, g));
    const OneDimSolution merged = solve_1d(make_auxiliary_problem(kEx1, law, AuxKind::merger), 0.05, 20.0);
    std::vector<SurplusPoint> pts;
    for (double a = 0.0; a <= 8.0; a += 0.5)
        for (double b = 0.0; b <= 8.0; b += 0.5) pts.push_back({a, b});
    const auto rows = merger_compare(merged, 0.0, pts, sol.value);
    for (const auto& r : rows) {
        ASSERT_TRUE(r.merger.has_value());
        EXPECT_GE(*r.merger - r.v2d, 0.0) << r.x.x1 << "," << r.x.x2;
    }
    const auto costly = merger_compare(merged, 3.0, {{1.0, 1.0}, {2.0, 2.0}}, sol.value);
    EXPECT_FALSE(costly[0].merger.has_value());
    EXPECT_DOUBLE_EQ(*costly[1].merger, merged.extend(1.0));
    EXPECT_THROW(merger_compare(merged, -1.0, pts, sol.value), InvalidInput);
}

TEST(Tilde, AsymmetricExampleHasAWitnessAboveM) {
    const ClaimLaw law = Exponential{0.6};
    const OneDimSolution wbar = solve_1d(make_auxiliary_problem(kEx1, law, AuxKind::wbar), 0.01, 14.0);
    const TildeCheck tc = check_tilde_suboptimality(kEx1, law, wbar);
    ASSERT_TRUE(tc.applicable);
    ASSERT_TRUE(tc.witness.has_value());
    EXPECT_GT(tc.witness->generator, 0.0);
    EXPECT_EQ(side_of_m(kEx1, tc.witness->point), Side::d2);
    EXPECT_GT(tc.probes, 0);
}

TEST(Tilde, ValueOnMIsAuxiliaryValue) {
    const ClaimLaw law = Exponential{0.6};
    const OneDimSolution wbar = solve_1d(make_auxiliary_problem(kEx1, law, AuxKind::wbar), 0.02, 14.0);
    const double r = kEx1.b1 / kEx1.b2;
    for (int j : {0, 10, 100}) EXPECT_DOUBLE_EQ(tilde_V_eval(wbar, kEx1, {r * wbar.x(j), wbar.x(j)}), wbar.value[static_cast<std::size_t>(j)]);
    // Off M, one branch pays the excess at unit price.
    EXPECT_NEAR(tilde_V_eval(wbar, kEx1, {3.0, 1.0}) - tilde_V_eval(wbar, kEx1, {2.0, 1.0}), 1.0, 1e-12);
    EXPECT_THROW(tilde_V_eval(wbar, kEx1, {40.0, 20.0}), InvalidInput);
}
