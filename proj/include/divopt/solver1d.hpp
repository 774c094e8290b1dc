#pragma once

// One-dimensional dividend problem with a constant reward rate and a payout
// multiplier: surplus x + c t - b * sum(U), payouts worth rho per unit, and a
// reward kappa accrued (also with weight rho) until ruin. The auxiliary value
// W-bar and the merger value are both instances.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "divopt/error.hpp"
#include "divopt/hjb2d.hpp"
#include "divopt/kernel.hpp"
#include "divopt/model.hpp"
#include "divopt/quadrature.hpp"

namespace divopt {

struct OneDimProblem {
    double c = 0.0;
    double b = 1.0;
    ClaimLaw law = Exponential{1.0};
    double lambda = 0.0;
    double q = 0.0;
    double kappa = 0.0;
    double rho = 1.0;
};

inline void validate(const OneDimProblem& pr) {
    if (!(pr.c > 0.0) || !(pr.b > 0.0) || !(pr.lambda >= 0.0) || !(pr.q > 0.0))
        throw InvalidInput("1D problem: need c > 0, b > 0, lambda >= 0, q > 0");
    if (!(pr.rho >= 1.0) || !(pr.kappa >= 0.0)) throw InvalidInput("1D problem: need rho >= 1 and kappa >= 0");
}

enum class AuxKind { wbar, merger };

/// W-bar: premium c2 and claims b2 U of branch 2, reward kappa, multiplier
/// 1 + b1/b2. Merger: pooled premium c1 + c2, full claims, no reward. The
/// merger cost only shifts the initial surplus and is applied by the caller.
inline OneDimProblem make_auxiliary_problem(const ModelParams& p, const ClaimLaw& law, AuxKind kind) {
    validate_params(p);
    if (kind == AuxKind::merger) return {p.c1 + p.c2, 1.0, law, p.lambda, p.q, 0.0, 1.0};
    const double r = p.b1 / p.b2;
    // c1/b1 >= c2/b2 makes the numerator nonnegative; clamp rounding noise.
    const double kappa = std::max(0.0, (p.c1 - r * p.c2) / (1.0 + r));
    return {p.c2, p.b2, law, p.lambda, p.q, kappa, 1.0 + r};
}

enum class BandLabel { A, B, C };

inline const char* to_string(BandLabel l) {
    switch (l) {
        case BandLabel::A: return "A";
        case BandLabel::B: return "B";
        case BandLabel::C: return "C";
    }
    return "?";
}

struct BandInterval {
    BandLabel label;
    double lo;
    double hi;
};

/// Decomposition of [0, x_max] into B (lump) and C (wait) intervals separated
/// by breakpoints, plus the isolated A points where premiums are paid out.
struct BandStructure {
    std::vector<BandInterval> intervals;  // B and C runs in increasing order
    std::vector<double> a_points;
    std::vector<double> breakpoints;      // interior interval boundaries

    /// The C intervals, in increasing order.
    std::vector<BandInterval> waiting() const {
        std::vector<BandInterval> out;
        for (const auto& i : intervals)
            if (i.label == BandLabel::C) out.push_back(i);
        return out;
    }
};

struct OneDimSolution {
    OneDimProblem problem;
    double delta = 0.0;
    double dx = 0.0;
    std::vector<double> value;        // w(j) at x = j dx
    std::vector<ActionSet> actions;   // argmax sets over {E0, E1}; E1 denotes the lump
    std::vector<BandLabel> labels;
    BandStructure bands;
    SolveReport report;

    double x(int j) const noexcept { return j * dx; }
    int j_max() const noexcept { return static_cast<int>(value.size()) - 1; }

    /// Value at grid index j with the slope-rho extension past truncation.
    double ext(int j) const noexcept {
        const int J = j_max();
        return j <= J ? value[static_cast<std::size_t>(j)] : value.back() + (j - J) * problem.rho * dx;
    }

    /// Floor-plus-remainder extension: pay the remainder, then follow the grid.
    double extend(double x) const {
        if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidInput("1D extend: surplus must be finite and nonnegative");
        const double f = std::floor(x / dx);
        return ext(static_cast<int>(f)) + problem.rho * (x - f * dx);
    }
};

namespace detail {

class OneDimScheme {
public:
    OneDimScheme(const OneDimProblem& pr, double delta, int J, int gl_order = 8)
        : pr_(pr), delta_(delta), dx_(pr.c * delta), J_(J) {
        const GaussLegendre gl(gl_order);
        kernel_ = build_kernel_1d(pr.c, pr.b, pr.law, pr.lambda, pr.q, delta, pr.rho, J, gl);
        decay_ = std::exp(-(pr.q + pr.lambda) * delta);
        reward_ = pr.rho * pr.kappa * (1.0 - decay_) / (pr.q + pr.lambda);
        div_prefix_.resize(static_cast<std::size_t>(J) + 1);
        double acc = 0.0;
        for (int j = 0; j <= J; ++j) div_prefix_[static_cast<std::size_t>(j)] = acc += kernel_.dividend[static_cast<std::size_t>(j)];
    }

    double dx() const noexcept { return dx_; }
    double decay() const noexcept { return decay_; }
    double self_weight() const noexcept { return kernel_.weight.front(); }
    double lump() const noexcept { return pr_.rho * dx_; }

    double up(const std::vector<double>& w, int j) const noexcept {
        return j < J_ ? w[static_cast<std::size_t>(j) + 1] : w[static_cast<std::size_t>(J_)] + lump();
    }

    double t0(const std::vector<double>& w, int j) const noexcept {
        double acc = decay_ * up(w, j) + reward_ + div_prefix_[static_cast<std::size_t>(j)];
        for (int k = 0; k <= j; ++k) acc += kernel_.weight[static_cast<std::size_t>(k)] * w[static_cast<std::size_t>(j - k)];
        return acc;
    }

private:
    OneDimProblem pr_;
    double delta_;
    double dx_;
    int J_;
    ClaimKernel1D kernel_;
    double decay_ = 0.0;
    double reward_ = 0.0;
    std::vector<double> div_prefix_;
};

inline BandStructure make_bands(const std::vector<BandLabel>& labels, double dx) {
    BandStructure bs;
    const int J = static_cast<int>(labels.size()) - 1;
    // A points are grid points; B/C runs are separated at midpoints.
    for (int j = 0; j <= J; ++j)
        if (labels[static_cast<std::size_t>(j)] == BandLabel::A) bs.a_points.push_back(j * dx);
    int start = 0;
    while (start <= J) {
        const BandLabel run = labels[static_cast<std::size_t>(start)] == BandLabel::B ? BandLabel::B : BandLabel::C;
        int end = start;
        auto same = [&](int j) {
            const BandLabel l = labels[static_cast<std::size_t>(j)];
            return run == BandLabel::B ? l == BandLabel::B : l != BandLabel::B;
        };
        while (end + 1 <= J && same(end + 1)) ++end;
        // An A point closing a C run is its upper end; alone it has no extent.
        double lo = start == 0 ? 0.0 : (start - 0.5) * dx;
        double hi = end == J ? J * dx : (end + 0.5) * dx;
        if (run == BandLabel::C) {
            if (labels[static_cast<std::size_t>(start)] == BandLabel::A && start > 0) lo = start * dx;
            if (labels[static_cast<std::size_t>(end)] == BandLabel::A) hi = end * dx;
            if (start == end && labels[static_cast<std::size_t>(start)] == BandLabel::A) {
                start = end + 1;
                continue;
            }
        }
        if (!bs.intervals.empty()) bs.breakpoints.push_back(lo);
        bs.intervals.push_back({run, lo, hi});
        start = end + 1;
    }
    return bs;
}

}  // namespace detail

struct Solve1DOptions {
    double rel_tol = 1e-10;
    int max_sweeps = 200000;
    double eps_tie = kTieTolerance;
    int gl_order = 8;
    /// Require the last grid point to be a lump point.
    bool require_terminal_lump = true;
};

/// Monotone value iteration for the 1D scheme on [0, x_max] with step c*delta.
inline OneDimSolution solve_1d(const OneDimProblem& pr, double delta, double x_max, const Solve1DOptions& opt = {}) {
    validate(pr);
    if (!(delta > 0.0) || !(x_max > 0.0)) throw InvalidInput("solve_1d: delta and x_max must be positive");
    const auto start = std::chrono::steady_clock::now();
    const double dx = pr.c * delta;
    const int J = static_cast<int>(std::lround(x_max / dx));
    if (J < 2) throw InvalidInput("solve_1d: x_max must span at least two grid steps");
    const detail::OneDimScheme scheme(pr, delta, J, opt.gl_order);

    std::vector<double> w(static_cast<std::size_t>(J) + 1, 0.0);
    std::vector<double> prev;
    const double decay = scheme.decay();
    const double loop_den = 1.0 - decay - scheme.self_weight();
    const double lump = scheme.lump();
    SolveReport rep;
    rep.mode = "inplace";
    double inc = kInf, tol = 0.0;
    int sweep = 0;
    while (sweep < opt.max_sweeps) {
        prev = w;
        // Downward so E0 sees the fresh j+1, with the closed-form "wait one
        // step, lump back" loop; then an upward lump pass.
        for (int j = J; j >= 0; --j) {
            const double t0 = scheme.t0(w, j);
            const double rest = t0 - decay * scheme.up(w, j) - scheme.self_weight() * w[static_cast<std::size_t>(j)];
            double best = std::max(t0, (rest + decay * lump) / loop_den);
            if (j > 0) best = std::max(best, w[static_cast<std::size_t>(j) - 1] + lump);
            w[static_cast<std::size_t>(j)] = std::max(w[static_cast<std::size_t>(j)], best);
        }
        for (int j = 1; j <= J; ++j) w[static_cast<std::size_t>(j)] = std::max(w[static_cast<std::size_t>(j)], w[static_cast<std::size_t>(j) - 1] + lump);
        ++sweep;
        inc = 0.0;
        double sup = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double d = w[i] - prev[i];
            inc = std::max(inc, std::abs(d));
            if (d < 0.0) rep.worst_decrease = std::max(rep.worst_decrease, -d);
            sup = std::max(sup, w[i]);
        }
        tol = opt.rel_tol * (1.0 + sup);
        if (inc < tol) break;
    }
    rep.iterations = sweep;
    rep.final_increment = inc;
    rep.tolerance = tol;
    if (!(inc < tol)) throw NonConvergence("1D value iteration did not converge", inc);

    OneDimSolution sol;
    sol.problem = pr;
    sol.delta = delta;
    sol.dx = dx;
    sol.actions.resize(w.size());
    sol.labels.resize(w.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    double res = 0.0;
    for (int j = 0; j <= J; ++j) {
        const double t0 = scheme.t0(w, j);
        const double t1 = j > 0 ? w[static_cast<std::size_t>(j) - 1] + lump : nan;
        const TResult r = select_actions(t0, t1, nan, opt.eps_tie);
        sol.actions[static_cast<std::size_t>(j)] = r.argmax;
        res = std::max(res, std::abs(r.value - w[static_cast<std::size_t>(j)]));
    }
    for (int j = 0; j <= J; ++j) {
        const ActionSet a = sol.actions[static_cast<std::size_t>(j)];
        BandLabel l = BandLabel::B;
        if (a.contains(Action::E0)) {
            const bool tie = a.contains(Action::E1);
            const bool next_lumps = j < J && sol.actions[static_cast<std::size_t>(j) + 1].contains(Action::E1);
            l = tie || next_lumps ? BandLabel::A : BandLabel::C;
        }
        sol.labels[static_cast<std::size_t>(j)] = l;
    }
    sol.value = std::move(w);
    sol.bands = detail::make_bands(sol.labels, dx);
    rep.residual = res;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    sol.report = rep;
    if (opt.require_terminal_lump && sol.labels.back() != BandLabel::B)
        throw TruncationTooSmall("solve_1d: the last grid point is not a lump point; increase x_max");
    return sol;
}

/// Value of the "pay everything, then stream premiums until the first claim"
/// strategy of a 1D problem: rho x + rho (c + kappa) / (lambda + q).
inline double take_and_run_1d(const OneDimProblem& pr, double x) {
    return pr.rho * x + pr.rho * (pr.c + pr.kappa) / (pr.lambda + pr.q);
}

/// The candidate built from W-bar: move to the line M with one branch paying
/// the excess, then follow the band strategy on M.
inline double tilde_V_eval(const OneDimSolution& wbar, const ModelParams& p, const SurplusPoint& x) {
    require_surplus(x, "tilde_V_eval");
    const double r = p.b1 / p.b2;
    const double top = wbar.j_max() * wbar.dx;
    if (side_of_m(p, x) == Side::d2) {
        const double proj = x.x1 / r;
        if (proj > top + 1e-12) throw InvalidInput("tilde_V_eval: projection outside the solved range");
        return x.x2 - proj + wbar.extend(proj);
    }
    if (x.x2 > top + 1e-12) throw InvalidInput("tilde_V_eval: projection outside the solved range");
    return x.x1 - r * x.x2 + wbar.extend(x.x2);
}

/// tilde-V as a RaySurface, for the continuous generator.
struct TildeSurface {
    const OneDimSolution* wbar;
    ModelParams params;

    double value(const SurplusPoint& x) const { return tilde_V_eval(*wbar, params, x); }

    // tilde-V is affine along a claim ray except where the projection onto M
    // crosses a node of the 1D grid.
    std::vector<double> ray_breaks(const SurplusPoint& x, double amax) const {
        std::vector<double> out;
        const double r = params.b1 / params.b2;
        const double proj = side_of_m(params, x) == Side::d2 ? x.x1 / r : x.x2;
        detail::lattice_breaks(proj, params.b2, wbar->dx, amax, out);
        return out;
    }
};

struct MergerSample {
    SurplusPoint x;
    std::optional<double> merger;  // V_M(x1 + x2 - m), undefined when x1 + x2 < m
    double v2d;
};

/// Tabulates the merged company's value against the two-branch value.
inline std::vector<MergerSample> merger_compare(const OneDimSolution& merged, double cost,
                                                const std::vector<SurplusPoint>& samples, const ValueField& v2d) {
    if (!(cost >= 0.0)) throw InvalidInput("merger_compare: merger cost must be nonnegative");
    std::vector<MergerSample> out;
    out.reserve(samples.size());
    for (const auto& x : samples) {
        require_surplus(x, "merger_compare");
        MergerSample s{x, std::nullopt, v2d.extend(x)};
        const double pooled = x.x1 + x.x2 - cost;
        if (pooled >= 0.0) s.merger = merged.extend(pooled);
        out.push_back(s);
    }
    return out;
}

}  // namespace divopt
