#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "divopt/model.hpp"

using namespace divopt;

namespace {

ModelParams example_params() { return {2.0, 1.0, 0.5, 0.5, 1.0, 0.05}; }

// Composite Simpson on [a, b] of (p + s x) * density(x); independent of the
// library's Gauss-Legendre code.
template <class Density>
double simpson_affine(Density&& dens, double a, double b, double p, double s, int panels = 200000) {
    const double h = (b - a) / panels;
    double sum = 0.0;
    for (int i = 0; i <= panels; ++i) {
        const double x = a + i * h;
        const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        sum += w * (p + s * x) * dens(x);
    }
    return sum * h / 3.0;
}

}  // namespace

TEST(ModelParams, AcceptsExampleAndClassifiesSymmetry) {
    EXPECT_FALSE(validate_params(example_params()).symmetric());
    EXPECT_TRUE(validate_params({21.4, 21.4, 0.5, 0.5, 10.0, 0.1}).symmetric());
}

TEST(ModelParams, RejectsProportionsNotSummingToOne) {
    ModelParams p = example_params();
    p.b1 = 0.6;
    EXPECT_THROW(validate_params(p), InvalidInput);
}

TEST(ModelParams, RejectsWrongBranchOrderAndNonPositiveRates) {
    ModelParams p = example_params();
    std::swap(p.c1, p.c2);
    EXPECT_THROW(validate_params(p), InvalidInput);
    p = example_params();
    p.q = 0.0;
    EXPECT_THROW(validate_params(p), InvalidInput);
    p = example_params();
    p.lambda = -1.0;
    EXPECT_THROW(validate_params(p), InvalidInput);
    p = example_params();
    p.c2 = std::nan("");
    EXPECT_THROW(validate_params(p), InvalidInput);
}

TEST(ClaimLaw, RejectsNonPositiveParameters) {
    EXPECT_THROW(ClaimLaw(Exponential{0.0}), InvalidInput);
    EXPECT_THROW(ClaimLaw(Erlang2{-1.0}), InvalidInput);
    EXPECT_THROW(ClaimLaw(Deterministic{0.0}), InvalidInput);
}

TEST(ClaimLaw, CdfValues) {
    EXPECT_NEAR(claim_cdf(Exponential{0.6}, 1.0), 1.0 - std::exp(-0.6), 1e-15);
    const double r = 6.0 / 7.0;
    EXPECT_NEAR(claim_cdf(Erlang2{r}, 2.0), 1.0 - (1.0 + 2.0 * r) * std::exp(-2.0 * r), 1e-15);
    const ClaimLaw det = Deterministic{29.0 / 12.0};
    EXPECT_EQ(claim_cdf(det, 2.0), 0.0);
    EXPECT_EQ(claim_cdf(det, 29.0 / 12.0), 1.0);  // right-continuous
    EXPECT_THROW(claim_cdf(det, -1.0), InvalidInput);
}

TEST(ClaimLaw, MeanAndAtom) {
    EXPECT_DOUBLE_EQ(ClaimLaw(Exponential{0.6}).mean(), 1.0 / 0.6);
    EXPECT_DOUBLE_EQ(ClaimLaw(Erlang2{0.5}).mean(), 4.0);
    EXPECT_FALSE(ClaimLaw(Erlang2{0.5}).atom().has_value());
    EXPECT_DOUBLE_EQ(*ClaimLaw(Deterministic{2.5}).atom(), 2.5);
}

TEST(IntegrateAffine, UnitWeightIsCdfDifference) {
    for (const ClaimLaw& law : {ClaimLaw(Exponential{0.6}), ClaimLaw(Erlang2{6.0 / 7.0})}) {
        EXPECT_NEAR(integrate_affine(law, 0.3, 2.7, 1.0, 0.0), law.cdf(2.7) - law.cdf(0.3), 1e-15);
        EXPECT_NEAR(integrate_affine(law, 0.0, kInf, 1.0, 0.0), 1.0, 1e-15);
        EXPECT_NEAR(integrate_affine(law, 0.0, kInf, 0.0, 1.0), law.mean(), 1e-13);
    }
}

TEST(IntegrateAffine, DeterministicIsIndicatorOfHalfOpenInterval) {
    const ClaimLaw law = Deterministic{2.0};
    EXPECT_EQ(integrate_affine(law, 1.0, 2.0, 3.0, 0.5), 4.0);  // atom at the closed right end
    EXPECT_EQ(integrate_affine(law, 2.0, 3.0, 3.0, 0.5), 0.0);  // open left end
    EXPECT_EQ(integrate_affine(law, 0.0, 1.9, 1.0, 0.0), 0.0);
}

TEST(IntegrateAffine, RejectsBadLimits) {
    const ClaimLaw law = Exponential{1.0};
    EXPECT_THROW(integrate_affine(law, -0.1, 1.0, 1.0, 0.0), InvalidInput);
    EXPECT_THROW(integrate_affine(law, 2.0, 1.0, 1.0, 0.0), InvalidInput);
}

TEST(IntegrateAffine, AdditiveOverRandomPartitions) {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const ClaimLaw& law : {ClaimLaw(Exponential{0.6}), ClaimLaw(Erlang2{6.0 / 7.0}), ClaimLaw(Deterministic{29.0 / 12.0})}) {
        for (int trial = 0; trial < 50; ++trial) {
            const double a = 3.0 * u(gen), b = a + 6.0 * u(gen);
            const double p = 4.0 * u(gen) - 2.0, s = 4.0 * u(gen) - 2.0;
            std::vector<double> cuts{a, b};
            const int k = 1 + static_cast<int>(8 * u(gen));
            for (int i = 0; i < k; ++i) cuts.push_back(a + (b - a) * u(gen));
            if (trial % 5 == 0) cuts.push_back(29.0 / 12.0 > a && 29.0 / 12.0 < b ? 29.0 / 12.0 : a);
            std::sort(cuts.begin(), cuts.end());
            double sum = 0.0;
            for (std::size_t i = 0; i + 1 < cuts.size(); ++i) sum += integrate_affine(law, cuts[i], cuts[i + 1], p, s);
            EXPECT_NEAR(sum, integrate_affine(law, a, b, p, s), 1e-13) << law.describe();
        }
    }
}

TEST(IntegrateAffine, MatchesSimpsonQuadratureOfDensity) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double d = 0.6, r = 6.0 / 7.0;
    auto exp_dens = [&](double x) { return d * std::exp(-d * x); };
    auto erl_dens = [&](double x) { return r * r * x * std::exp(-r * x); };
    for (int trial = 0; trial < 10; ++trial) {
        const double a = 4.0 * u(gen), b = a + 5.0 * u(gen) + 0.1;
        const double p = 2.0 * u(gen) - 1.0, s = 2.0 * u(gen) - 1.0;
        const double e_ref = simpson_affine(exp_dens, a, b, p, s);
        const double g_ref = simpson_affine(erl_dens, a, b, p, s);
        EXPECT_NEAR(integrate_affine(Exponential{d}, a, b, p, s), e_ref, 1e-10 * std::max(1.0, std::abs(e_ref)));
        EXPECT_NEAR(integrate_affine(Erlang2{r}, a, b, p, s), g_ref, 1e-10 * std::max(1.0, std::abs(g_ref)));
    }
}

TEST(ClaimLaw, InversionSamplerMatchesMoments) {
    std::mt19937_64 gen(3);
    for (const ClaimLaw& law : {ClaimLaw(Exponential{0.6}), ClaimLaw(Erlang2{6.0 / 7.0})}) {
        const int n = 200000;
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = law.sample(gen);
            ASSERT_GE(x, 0.0);
            s += x;
            s2 += x * x;
        }
        const double mean = s / n;
        const double sd = std::sqrt(s2 / n - mean * mean);
        EXPECT_NEAR(mean, law.mean(), 4.0 * sd / std::sqrt(n)) << law.describe();
    }
    EXPECT_EQ(ClaimLaw(Deterministic{1.5}).sample(gen), 1.5);
}

TEST(Geometry, SideOfM) {
    const ModelParams p{2.0, 1.0, 0.6, 0.4, 1.0, 0.05};
    const double slope = p.b2 / p.b1;
    EXPECT_EQ(side_of_m(p, {3.0, 1.0}), Side::d1);
    EXPECT_EQ(side_of_m(p, {1.0, 3.0}), Side::d2);
    EXPECT_EQ(side_of_m(p, {3.0, 3.0 * slope}), Side::on_m);
}

TEST(Geometry, GridWindowRoundsToNearestStep) {
    const GridSpec g = make_grid_for_window(example_params(), 0.03, 14.0, 14.0);
    EXPECT_DOUBLE_EQ(g.dx1, 0.06);
    EXPECT_DOUBLE_EQ(g.dx2, 0.03);
    EXPECT_EQ(g.n_max, 233);
    EXPECT_EQ(g.m_max, 467);
    EXPECT_THROW(make_grid(example_params(), 0.0, 10, 10), InvalidInput);
    EXPECT_THROW(make_grid(example_params(), 0.1, 1, 10), InvalidInput);
}

TEST(Geometry, RequireSurplusRejectsNegativeOrNan) {
    EXPECT_THROW(require_surplus({-1.0, 0.0}, "t"), InvalidInput);
    EXPECT_THROW(require_surplus({0.0, std::nan("")}, "t"), InvalidInput);
    EXPECT_NO_THROW(require_surplus({0.0, 0.0}, "t"));
}
