#pragma once

// Monte Carlo evaluation of dividend strategies on the two-branch model.
// Premium streams between events are discounted in closed form; only claim
// and decision epochs are simulated.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "divopt/error.hpp"
#include "divopt/hjb2d.hpp"
#include "divopt/model.hpp"
#include "divopt/solver1d.hpp"
#include "divopt/solver2d.hpp"

namespace divopt {

/// Stationary grid policy from a solve, executed as the discrete scheme
/// prescribes: pay the initial remainder down to the grid, then one grid
/// action per epoch. Among tied actions E1 is preferred, then E2, then E0.
struct PolicyTable {
    const PolicyField* policy = nullptr;
    bool converged = false;
};

inline PolicyTable make_policy_table(const Solution2D& sol) {
    return {&sol.policy, sol.report.final_increment < sol.report.tolerance};
}

/// Pay all surplus at once, then the premiums until the first claim ruins both branches.
struct TakeAndRun {};

/// Project onto M with one lump, then run the grid band policy of W-bar on M,
/// branch 1 paying its excess premium so the surplus stays on M.
struct MReflection {
    const OneDimSolution* wbar = nullptr;
};

using StrategySpec = std::variant<PolicyTable, TakeAndRun, MReflection>;

inline std::string describe(const StrategySpec& s) {
    return std::visit(detail::Overload{[](const PolicyTable&) { return std::string("policy-table"); },
                                       [](const TakeAndRun&) { return std::string("take-and-run"); },
                                       [](const MReflection&) { return std::string("m-reflection"); }},
                      s);
}

struct SimResult {
    double mean = 0.0;
    double stderr_ = 0.0;
    long paths = 0;
    double horizon = 0.0;
    std::uint64_t seed = 0;
    std::string rng;
    double mean_events = 0.0;  // average number of simulated epochs per path
};

inline constexpr const char* kRngName = "mt19937_64 seeded by splitmix64(seed, path)";

struct SimOptions {
    int threads = 1;
    /// Paths used to size the discount horizon before the main run.
    long pilot_paths = 2000;
};

/// One event of a traced path.
struct PathEvent {
    enum class Kind { initial, lump1, lump2, step, claim, ruin, horizon } kind;
    double t;
    double x1;  // surplus after the event
    double x2;
    double paid;  // undiscounted dividend paid at the event
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::mt19937_64 path_stream(std::uint64_t seed, std::uint64_t path) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(path + 0x632be59bd9b4e019ULL)));
}

struct NoTrace {
    void operator()(const PathEvent&) const noexcept {}
};

// Discounted dividends of one path of the grid policy from (x1, x2).
template <class Trace>
double run_policy_path(const ModelParams& p, const ClaimLaw& law, const PolicyField& pol, SurplusPoint x0,
                       double horizon, std::mt19937_64& gen, long& events, Trace&& trace) {
    const auto& g = pol.grid();
    const double f1 = std::floor(x0.x1 / g.dx1);
    const double f2 = std::floor(x0.x2 / g.dx2);
    int n = static_cast<int>(f1);
    int m = static_cast<int>(f2);
    double total = (x0.x1 - f1 * g.dx1) + (x0.x2 - f2 * g.dx2);
    // Beyond the truncation the extension pays lumps down to the window.
    if (n > g.n_max) total += (n - g.n_max) * g.dx1, n = g.n_max;
    if (m > g.m_max) total += (m - g.m_max) * g.dx2, m = g.m_max;
    trace(PathEvent{PathEvent::Kind::initial, 0.0, g.x1(n), g.x2(m), total});

    const double step_decay = std::exp(-p.q * g.delta);
    const double p_claim = -std::expm1(-p.lambda * g.delta);
    double t = 0.0;
    double disc = 1.0;
    while (t < horizon) {
        ++events;
        const ActionSet a = pol(n, m);
        if (a.contains(Action::E1) && n > 0) {
            --n;
            total += disc * g.dx1;
            trace(PathEvent{PathEvent::Kind::lump1, t, g.x1(n), g.x2(m), g.dx1});
            continue;
        }
        if (a.contains(Action::E2) && m > 0) {
            --m;
            total += disc * g.dx2;
            trace(PathEvent{PathEvent::Kind::lump2, t, g.x1(n), g.x2(m), g.dx2});
            continue;
        }
        const double u = ClaimLaw::uniform01(gen);
        if (u >= p_claim) {
            // no claim in (t, t + delta]
            t += g.delta;
            disc *= step_decay;
            ++n;
            ++m;
            trace(PathEvent{PathEvent::Kind::step, t, g.x1(n), g.x2(m), 0.0});
            if (n > g.n_max) {
                n = g.n_max;
                total += disc * g.dx1;
                trace(PathEvent{PathEvent::Kind::lump1, t, g.x1(n), g.x2(m), g.dx1});
            }
            if (m > g.m_max) {
                m = g.m_max;
                total += disc * g.dx2;
                trace(PathEvent{PathEvent::Kind::lump2, t, g.x1(n), g.x2(m), g.dx2});
            }
            continue;
        }
        // claim at t + s, s = inverse cdf of u conditioned on s < delta
        const double s = -std::log1p(-u) / p.lambda;
        const double alpha = law.sample(gen);
        const double y1 = g.x1(n) + p.c1 * s - p.b1 * alpha;
        const double y2 = g.x2(m) + p.c2 * s - p.b2 * alpha;
        t += s;
        disc *= std::exp(-p.q * s);
        if (y1 < 0.0 || y2 < 0.0) {
            trace(PathEvent{PathEvent::Kind::ruin, t, y1, y2, 0.0});
            return total;
        }
        const double k1 = std::floor(y1 / g.dx1);
        const double k2 = std::floor(y2 / g.dx2);
        const double paid = (y1 - k1 * g.dx1) + (y2 - k2 * g.dx2);
        total += disc * paid;
        n = static_cast<int>(k1);
        m = static_cast<int>(k2);
        trace(PathEvent{PathEvent::Kind::claim, t, g.x1(n), g.x2(m), paid});
    }
    trace(PathEvent{PathEvent::Kind::horizon, t, g.x1(n), g.x2(m), 0.0});
    return total;
}

inline double run_take_and_run(const ModelParams& p, SurplusPoint x0, double horizon, std::mt19937_64& gen,
                               long& events) {
    ++events;
    const double u = ClaimLaw::uniform01(gen);
    const double T = std::min(-std::log1p(-u) / p.lambda, horizon);
    return x0.x1 + x0.x2 + (p.c1 + p.c2) * (-std::expm1(-p.q * T)) / p.q;
}

// The 1D grid band policy of W-bar, lifted to M.
inline double run_m_reflection(const ModelParams& p, const ClaimLaw& law, const OneDimSolution& w, SurplusPoint x0,
                               double horizon, std::mt19937_64& gen, long& events) {
    const double r = p.b1 / p.b2;
    const double rho = w.problem.rho;
    const double dx = w.dx;
    const double delta = w.delta;
    double total = 0.0;
    double y;  // position on M, measured by the branch-2 surplus
    if (side_of_m(p, x0) == Side::d2) {
        y = x0.x1 / r;
        total += x0.x2 - y;
    } else {
        y = x0.x2;
        total += x0.x1 - r * y;
    }
    const double f = std::floor(y / dx);
    int j = static_cast<int>(f);
    total += rho * (y - f * dx);
    const int J = w.j_max();
    if (j > J) total += rho * (j - J) * dx, j = J;

    // reward flow: branch 1 pays its excess premium rho * kappa continuously
    const double flow = rho * w.problem.kappa;
    const double step_decay = std::exp(-p.q * delta);
    const double p_claim = -std::expm1(-p.lambda * delta);
    double t = 0.0;
    double disc = 1.0;
    while (t < horizon) {
        ++events;
        if (w.actions[static_cast<std::size_t>(j)].contains(Action::E1) && j > 0) {
            --j;
            total += disc * rho * dx;
            continue;
        }
        const double u = ClaimLaw::uniform01(gen);
        if (u >= p_claim) {
            total += disc * flow * (-std::expm1(-p.q * delta)) / p.q;
            t += delta;
            disc *= step_decay;
            if (++j > J) {
                j = J;
                total += disc * rho * dx;
            }
            continue;
        }
        const double s = -std::log1p(-u) / p.lambda;
        total += disc * flow * (-std::expm1(-p.q * s)) / p.q;
        const double alpha = law.sample(gen);
        t += s;
        disc *= std::exp(-p.q * s);
        const double after = j * dx + w.problem.c * s - w.problem.b * alpha;
        if (after < 0.0) return total;
        const double k = std::floor(after / dx);
        total += disc * rho * (after - k * dx);
        j = static_cast<int>(k);
    }
    return total;
}

// Upper bound on the discounted value still to come from any state the strategy can reach.
inline double remaining_value_bound(const ModelParams& p, const StrategySpec& s) {
    const double flow = (p.c1 + p.c2) / p.q;
    return std::visit(Overload{[&](const PolicyTable& t) {
                                   const auto& g = t.policy->grid();
                                   return g.n_max * g.dx1 + g.m_max * g.dx2 + flow;
                               },
                               [&](const TakeAndRun&) { return flow; },
                               [&](const MReflection& m) {
                                   const double top = m.wbar->j_max() * m.wbar->dx;
                                   return (1.0 + p.b1 / p.b2) * top + flow;
                               }},
                      s);
}

}  // namespace detail

/// Discounted dividends of a single path, with every event reported to `trace`.
template <class Trace>
double simulate_path(const ModelParams& p, const ClaimLaw& law, const PolicyTable& table, SurplusPoint x0,
                     double horizon, std::uint64_t seed, std::uint64_t path, Trace&& trace) {
    if (!table.policy) throw InvalidInput("simulate_path: empty policy table");
    auto gen = detail::path_stream(seed, path);
    long events = 0;
    return detail::run_policy_path(p, law, *table.policy, x0, horizon, gen, events, trace);
}

namespace detail {

inline void simulate_block(const ModelParams& p, const ClaimLaw& law, const StrategySpec& strat, SurplusPoint x0,
                           double horizon, std::uint64_t seed, long first, long last, std::vector<double>& out,
                           long& events) {
    for (long i = first; i < last; ++i) {
        auto gen = path_stream(seed, static_cast<std::uint64_t>(i));
        out[static_cast<std::size_t>(i)] = std::visit(
            Overload{[&](const PolicyTable& t) {
                         return run_policy_path(p, law, *t.policy, x0, horizon, gen, events, NoTrace{});
                     },
                     [&](const TakeAndRun&) { return run_take_and_run(p, x0, horizon, gen, events); },
                     [&](const MReflection& m) { return run_m_reflection(p, law, *m.wbar, x0, horizon, gen, events); }},
            strat);
    }
}

// Runs paths [0, n) across threads; the reduction is in path order, so the
// result does not depend on the thread count.
inline SimResult run_paths(const ModelParams& p, const ClaimLaw& law, const StrategySpec& strat, SurplusPoint x0,
                           long n, double horizon, std::uint64_t seed, int threads) {
    std::vector<double> vals(static_cast<std::size_t>(n));
    const int k = std::max(1, std::min<int>(threads, static_cast<int>(std::max<long>(1, n / 64))));
    std::vector<long> events(static_cast<std::size_t>(k), 0);
    if (k == 1) {
        simulate_block(p, law, strat, x0, horizon, seed, 0, n, vals, events[0]);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < k; ++w) {
            const long a = n * w / k, b = n * (w + 1) / k;
            pool.emplace_back([&, a, b, w] { simulate_block(p, law, strat, x0, horizon, seed, a, b, vals, events[static_cast<std::size_t>(w)]); });
        }
        for (auto& th : pool) th.join();
    }
    double sum = 0.0;
    for (double v : vals) sum += v;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    long ev = 0;
    for (long e : events) ev += e;
    SimResult r;
    r.mean = mean;
    r.stderr_ = sd / std::sqrt(static_cast<double>(n));
    r.paths = n;
    r.horizon = horizon;
    r.seed = seed;
    r.rng = kRngName;
    r.mean_events = static_cast<double>(ev) / static_cast<double>(n);
    return r;
}

}  // namespace detail

/// Mean and standard error of the discounted dividends up to ruin.
///
/// A pilot run sizes the horizon T so that e^{-qT} times an upper bound on
/// the value still to come stays below a tenth of the standard error.
inline SimResult simulate_policy(const ModelParams& p, const ClaimLaw& law, const StrategySpec& strat,
                                 const SurplusPoint& x0, long n_paths, std::uint64_t seed,
                                 const SimOptions& opt = {}) {
    if (n_paths < 1) throw InvalidInput("simulate_policy: n_paths must be at least 1");
    require_surplus(x0, "simulate_policy");
    if (const auto* t = std::get_if<PolicyTable>(&strat)) {
        if (!t->policy) throw InvalidInput("simulate_policy: empty policy table");
        if (!t->converged) throw InvalidInput("simulate_policy: policy table does not come from a converged solve");
    }
    if (const auto* m = std::get_if<MReflection>(&strat); m && !m->wbar)
        throw InvalidInput("simulate_policy: M-reflection needs a W-bar solution");

    const double bound = detail::remaining_value_bound(p, strat);
    // Pilot with a generous horizon on a disjoint seed.
    const double pilot_horizon = std::log(1e8 * (1.0 + bound)) / p.q;
    const long pilot_n = std::max<long>(2, std::min(opt.pilot_paths, n_paths));
    const SimResult pilot = detail::run_paths(p, law, strat, x0, pilot_n, pilot_horizon, detail::splitmix64(seed ^ 0x5eedULL), opt.threads);
    double target = 0.5 * pilot.stderr_ * std::sqrt(static_cast<double>(pilot_n) / static_cast<double>(n_paths));
    for (;;) {
        const double horizon = target > 0.0 ? std::max(0.0, std::log(bound / (0.1 * target)) / p.q) : pilot_horizon;
        SimResult r = detail::run_paths(p, law, strat, x0, n_paths, horizon, seed, opt.threads);
        if (r.stderr_ == 0.0 || std::exp(-p.q * horizon) * bound < 0.1 * r.stderr_ || horizon >= pilot_horizon) return r;
        target = 0.5 * r.stderr_;
    }
}

/// (solver_value - mean) / standard error.
inline double estimate_gap(const SimResult& sim, double solver_value) {
    if (sim.stderr_ > 0.0) return (solver_value - sim.mean) / sim.stderr_;
    if (solver_value == sim.mean) return 0.0;
    throw Error("estimate_gap: zero standard error with a nonzero gap");
}

}  // namespace divopt
