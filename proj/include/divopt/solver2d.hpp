#pragma once

// Monotone value iteration for the lattice value v^delta, policy and region
// extraction, and the structural checks built on the converged field.

#include <algorithm>
#include <array>
#include <cstdint>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "divopt/hjb2d.hpp"
#include "divopt/model.hpp"
#include "divopt/solver1d.hpp"

namespace divopt {

enum class SweepMode { jacobi, inplace };

struct SolveOptions {
    /// Stop when the sup-norm increment falls below rel_tol * (1 + sup v).
    double rel_tol = 1e-8;
    /// Absolute tolerance; overrides rel_tol when positive.
    double abs_tol = 0.0;
    int max_sweeps = 200000;
    SweepMode mode = SweepMode::inplace;
    /// Worker threads for Jacobi sweeps; in-place sweeps are sequential.
    int threads = 1;
    double eps_tie = kTieTolerance;
    /// Called after every sweep with (sweep, increment); return false to abort.
    std::function<bool(int, double)> progress;
};

class PolicyField {
public:
    PolicyField() = default;
    explicit PolicyField(const GridSpec& g) : grid_(g), actions_(g.size()) {}

    const GridSpec& grid() const noexcept { return grid_; }
    ActionSet& operator()(int n, int m) noexcept { return actions_[idx(n, m)]; }
    ActionSet operator()(int n, int m) const noexcept { return actions_[idx(n, m)]; }

private:
    std::size_t idx(int n, int m) const noexcept { return static_cast<std::size_t>(n) * grid_.cols() + m; }
    GridSpec grid_{};
    std::vector<ActionSet> actions_;
};

struct Solution2D {
    ValueField value;
    PolicyField policy;
    SolveReport report;
};

namespace detail {

// T1/T2 candidates for row n given the (possibly updated) rows n-1 and n.
inline double lump_candidate(const ValueField& v, int n, int m) {
    double best = -kInf;
    if (n > 0) best = v(n - 1, m) + v.grid().dx1;
    if (m > 0) best = std::max(best, v(n, m - 1) + v.grid().dx2);
    return best;
}

inline void jacobi_rows(const DiscreteHjb& hjb, const ValueField& src, ValueField& dst, int n0, int n1) {
    const auto& g = src.grid();
    for (int n = n0; n < n1; ++n) {
        auto out = dst.row(n);
        hjb.t0_row(src, n, out);
        for (int m = 0; m <= g.m_max; ++m) out[m] = std::max(out[m], lump_candidate(src, n, m));
    }
}

// Rows only read `src`, so any split of the rows gives the same result.
inline void jacobi_sweep(const DiscreteHjb& hjb, const ValueField& src, ValueField& dst, int threads = 1) {
    const int rows = src.grid().rows();
    threads = std::clamp(threads, 1, rows);
    if (threads == 1) {
        jacobi_rows(hjb, src, dst, 0, rows);
        return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
        const int a = rows * t / threads, b = rows * (t + 1) / threads;
        pool.emplace_back([&, a, b] { jacobi_rows(hjb, src, dst, a, b); });
    }
    for (auto& th : pool) th.join();
}

// Rows are visited top-down so T0 sees the fresh row n+1. Within a row, m
// runs downward so the up-right neighbour (n+1, m+1) can first be refreshed
// with the lump E1 back onto the fresh (n, m+1); an upward pass then applies
// E2 along the row, and a final bottom-up pass propagates both lumps across
// rows. Every update applies a component of T to current values, so values
// only increase and never pass v^delta.
//
// Each point also gets the closed-form value of repeating "E0, then lump E1
// and E2 back to (n, m)" until a claim, with claims continuing from current
// values. That loop is how the grid realises an isolated A0 point, where
// plain sweeps would gain only a factor e^{-(q+lambda) delta} per sweep.
inline void inplace_sweep(const DiscreteHjb& hjb, ValueField& v, std::vector<double>& scratch) {
    const auto& g = v.grid();
    const int N = g.n_max;
    const int M = g.m_max;
    const double decay = hjb.decay();
    const double w00 = hjb.self_weight();
    const double loop_den = 1.0 - decay - w00;
    scratch.resize(static_cast<std::size_t>(g.cols()));
    for (int n = N; n >= 0; --n) {
        hjb.t0_row(v, n, scratch);
        auto row = v.row(n);
        for (int m = M; m >= 0; --m) {
            double t0 = scratch[m];
            double upright = v.ext(n + 1, m + 1);
            if (n < N && m < M) {
                double& cell = v(n + 1, m + 1);
                const double refreshed = row[m + 1] + g.dx1;
                if (refreshed > cell) {
                    t0 += decay * (refreshed - cell);
                    cell = upright = refreshed;
                }
            } else {
                // the up-right neighbour lies on the linear extension of the fresh values
                const double fresh = n < N ? v(n + 1, M) + g.dx2 : (m < M ? row[m + 1] + g.dx1 : row[M] + g.dx1 + g.dx2);
                if (fresh > upright) {
                    t0 += decay * (fresh - upright);
                    upright = fresh;
                }
            }
            double best = t0;
            const double rest = t0 - decay * upright - w00 * row[m];
            best = std::max(best, (rest + decay * (g.dx1 + g.dx2)) / loop_den);
            if (n > 0) best = std::max(best, v(n - 1, m) + g.dx1);
            if (m > 0) best = std::max(best, row[m - 1] + g.dx2);
            row[m] = std::max(row[m], best);
        }
        for (int m = 1; m <= M; ++m) row[m] = std::max(row[m], row[m - 1] + g.dx2);
    }
    for (int n = 0; n <= N; ++n) {
        auto row = v.row(n);
        for (int m = 0; m <= M; ++m) row[m] = std::max(row[m], lump_candidate(v, n, m));
    }
}

}  // namespace detail

/// Evaluates T on every grid point of `v` and returns the argmax sets.
inline PolicyField extract_policy(const DiscreteHjb& hjb, const ValueField& v, double eps_tie = kTieTolerance,
                                  double* residual = nullptr) {
    const auto& g = v.grid();
    PolicyField pol(g);
    std::vector<double> t0(static_cast<std::size_t>(g.cols()));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    double res = 0.0;
    for (int n = 0; n <= g.n_max; ++n) {
        hjb.t0_row(v, n, t0);
        for (int m = 0; m <= g.m_max; ++m) {
            const double t1 = n > 0 ? v(n - 1, m) + g.dx1 : nan;
            const double t2 = m > 0 ? v(n, m - 1) + g.dx2 : nan;
            const TResult r = select_actions(t0[m], t1, t2, eps_tie);
            pol(n, m) = r.argmax;
            res = std::max(res, std::abs(r.value - v(n, m)));
        }
    }
    if (residual) *residual = res;
    return pol;
}

/// max over the grid of |max(T0 v - v, T1 v - v, T2 v - v)|.
inline double residual_check(const DiscreteHjb& hjb, const ValueField& v) {
    double res = 0.0;
    extract_policy(hjb, v, kTieTolerance, &res);
    return res;
}

inline Solution2D solve(const DiscreteHjb& hjb, const SolveOptions& opt = {}) {
    const auto start = std::chrono::steady_clock::now();
    const auto& g = hjb.grid();
    if (!(opt.rel_tol > 0.0) && !(opt.abs_tol > 0.0)) throw InvalidInput("solve: tolerance must be positive");

    ValueField v(g, 0.0);
    ValueField prev(g, 0.0);
    std::vector<double> scratch;
    SolveReport rep;
    rep.mode = opt.mode == SweepMode::inplace ? "inplace" : "jacobi";
    double inc = kInf;
    double tol = 0.0;
    int sweep = 0;
    for (; sweep < opt.max_sweeps;) {
        if (opt.mode == SweepMode::inplace) {
            std::copy(v.data().begin(), v.data().end(), prev.data().begin());
            detail::inplace_sweep(hjb, v, scratch);
        } else {
            std::swap(v, prev);
            detail::jacobi_sweep(hjb, prev, v, opt.threads);
        }
        ++sweep;
        inc = 0.0;
        double sup = 0.0;
        const auto cur = v.data();
        const auto old = prev.data();
        for (std::size_t i = 0; i < cur.size(); ++i) {
            const double d = cur[i] - old[i];
            inc = std::max(inc, std::abs(d));
            if (d < 0.0) rep.worst_decrease = std::max(rep.worst_decrease, -d);
            sup = std::max(sup, cur[i]);
        }
        tol = opt.abs_tol > 0.0 ? opt.abs_tol : opt.rel_tol * (1.0 + sup);
        if (opt.progress && !opt.progress(sweep, inc)) break;
        if (inc < tol) break;
    }
    rep.iterations = sweep;
    rep.final_increment = inc;
    rep.tolerance = tol;
    if (!(inc < tol))
        throw NonConvergence("value iteration did not converge within " + std::to_string(sweep) + " sweeps", inc);

    Solution2D sol{std::move(v), {}, rep};
    sol.policy = extract_policy(hjb, sol.value, opt.eps_tie, &sol.report.residual);
    sol.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return sol;
}

/// Floor-plus-remainder extension of the grid values to a surplus point.
inline double extend_value(const ValueField& v, const SurplusPoint& x) {
    require_surplus(x, "extend_value");
    return v.extend(x);
}

// ---------------------------------------------------------------------------
// Regions
// ---------------------------------------------------------------------------

enum class Region : std::uint8_t { C, B0, B1, B2, A0, A1, A2 };

inline const char* to_string(Region r) {
    switch (r) {
        case Region::C: return "C";
        case Region::B0: return "B0";
        case Region::B1: return "B1";
        case Region::B2: return "B2";
        case Region::A0: return "A0";
        case Region::A1: return "A1";
        case Region::A2: return "A2";
    }
    return "?";
}

inline constexpr std::array<Region, 7> kAllRegions{Region::C,  Region::B0, Region::B1, Region::B2,
                                                   Region::A0, Region::A1, Region::A2};

struct GridComponent {
    std::vector<std::pair<int, int>> cells;  // (n, m)
    SurplusPoint centroid;
};

/// Maximal run of A1 points along the E0 direction (n + k, m + k).
struct DiagonalSegment {
    SurplusPoint start;
    SurplusPoint end;
    int cells = 0;
    double horizontal_extent() const noexcept { return end.x1 - start.x1; }
    double slope() const noexcept { return (end.x2 - start.x2) / (end.x1 - start.x1); }
};

class RegionMap {
public:
    RegionMap() = default;
    explicit RegionMap(const GridSpec& g) : grid_(g), labels_(g.size(), Region::C) {}

    const GridSpec& grid() const noexcept { return grid_; }
    Region& operator()(int n, int m) noexcept { return labels_[idx(n, m)]; }
    Region operator()(int n, int m) const noexcept { return labels_[idx(n, m)]; }

    std::size_t count(Region r) const { return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), r)); }

    /// 8-connected components of one label.
    std::vector<GridComponent> components(Region r) const {
        std::vector<GridComponent> out;
        std::vector<char> seen(labels_.size(), 0);
        std::vector<std::pair<int, int>> stack;
        for (int n = 0; n <= grid_.n_max; ++n) {
            for (int m = 0; m <= grid_.m_max; ++m) {
                if ((*this)(n, m) != r || seen[idx(n, m)]) continue;
                GridComponent comp;
                stack.assign(1, {n, m});
                seen[idx(n, m)] = 1;
                while (!stack.empty()) {
                    const auto [a, b] = stack.back();
                    stack.pop_back();
                    comp.cells.emplace_back(a, b);
                    for (int da = -1; da <= 1; ++da) {
                        for (int db = -1; db <= 1; ++db) {
                            const int na = a + da, nb = b + db;
                            if (na < 0 || nb < 0 || na > grid_.n_max || nb > grid_.m_max) continue;
                            if ((*this)(na, nb) != r || seen[idx(na, nb)]) continue;
                            seen[idx(na, nb)] = 1;
                            stack.emplace_back(na, nb);
                        }
                    }
                }
                double sx = 0.0, sy = 0.0;
                for (const auto& [a, b] : comp.cells) sx += grid_.x1(a), sy += grid_.x2(b);
                const double k = static_cast<double>(comp.cells.size());
                comp.centroid = {sx / k, sy / k};
                out.push_back(std::move(comp));
            }
        }
        return out;
    }

    /// Centroids of the A0 clusters.
    std::vector<SurplusPoint> a0_points() const {
        std::vector<SurplusPoint> pts;
        for (const auto& c : components(Region::A0)) pts.push_back(c.centroid);
        return pts;
    }

    /// Maximal diagonal runs of A1 points with at least `min_cells` points.
    std::vector<DiagonalSegment> a1_segments(int min_cells = 3) const {
        std::vector<DiagonalSegment> segs;
        for (int n = 0; n <= grid_.n_max; ++n) {
            for (int m = 0; m <= grid_.m_max; ++m) {
                if ((*this)(n, m) != Region::A1) continue;
                if (n > 0 && m > 0 && (*this)(n - 1, m - 1) == Region::A1) continue;  // not a run start
                int k = 0;
                while (n + k + 1 <= grid_.n_max && m + k + 1 <= grid_.m_max && (*this)(n + k + 1, m + k + 1) == Region::A1) ++k;
                if (k + 1 < min_cells) continue;
                segs.push_back({{grid_.x1(n), grid_.x2(m)}, {grid_.x1(n + k), grid_.x2(m + k)}, k + 1});
            }
        }
        std::sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) { return a.cells > b.cells; });
        return segs;
    }

private:
    std::size_t idx(int n, int m) const noexcept { return static_cast<std::size_t>(n) * grid_.cols() + m; }
    GridSpec grid_{};
    std::vector<Region> labels_;
};

/// Labels every grid point from its argmax set.
///
/// Lump-optimal points are B0 (both lumps), B1 or B2. Points where E0 ties
/// with lumps within eps_tie take A0/A1/A2 directly. Exact ties are not
/// generic on a lattice, so an E0 point is also an A-point when the lump
/// region it borders pays back onto it: A1 if the right neighbour pays E1,
/// A2 if the upper neighbour pays E2, A0 if both. The rest of E0 is C.
inline RegionMap extract_regions(const PolicyField& pol) {
    const auto& g = pol.grid();
    RegionMap map(g);
    for (int n = 0; n <= g.n_max; ++n) {
        for (int m = 0; m <= g.m_max; ++m) {
            const ActionSet a = pol(n, m);
            const bool e0 = a.contains(Action::E0);
            bool e1 = a.contains(Action::E1);
            bool e2 = a.contains(Action::E2);
            if (!e0) {
                map(n, m) = e1 && e2 ? Region::B0 : (e1 ? Region::B1 : Region::B2);
                continue;
            }
            if (!e1 && !e2) {
                e1 = n < g.n_max && pol(n + 1, m).contains(Action::E1);
                e2 = m < g.m_max && pol(n, m + 1).contains(Action::E2);
            }
            map(n, m) = e1 && e2 ? Region::A0 : e1 ? Region::A1 : e2 ? Region::A2 : Region::C;
        }
    }
    return map;
}

// ---------------------------------------------------------------------------
// Structural checks
// ---------------------------------------------------------------------------

/// Worst violations of the a-priori bounds; all fields are >= 0 and vanish
/// when every bound holds.
struct BoundViolations {
    double lower = 0.0;       // n dx1 + m dx2 - v
    double upper = 0.0;       // v - (n dx1 + m dx2 + (c1 + c2) / q)
    double increment1 = 0.0;  // dx1 - (v(n, m) - v(n - 1, m))
    double increment2 = 0.0;  // dx2 - (v(n, m) - v(n, m - 1))

    double worst() const noexcept { return std::max({lower, upper, increment1, increment2}); }
};

inline BoundViolations check_bounds(const ValueField& v, const ModelParams& p) {
    const auto& g = v.grid();
    const double cap = (p.c1 + p.c2) / p.q;
    BoundViolations b;
    for (int n = 0; n <= g.n_max; ++n) {
        for (int m = 0; m <= g.m_max; ++m) {
            const double lin = g.x1(n) + g.x2(m);
            const double x = v(n, m);
            b.lower = std::max(b.lower, lin - x);
            b.upper = std::max(b.upper, x - lin - cap);
            if (n > 0) b.increment1 = std::max(b.increment1, g.dx1 - (x - v(n - 1, m)));
            if (m > 0) b.increment2 = std::max(b.increment2, g.dx2 - (x - v(n, m - 1)));
        }
    }
    return b;
}

/// Uniform points strictly below the line M inside the grid window.
inline std::vector<SurplusPoint> sample_d1_points(const GridSpec& g, const ModelParams& p, int count,
                                                  std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double x1_top = g.n_max * g.dx1;
    const double x2_top = g.m_max * g.dx2;
    const double slope = p.b2 / p.b1;
    std::vector<SurplusPoint> pts;
    while (static_cast<int>(pts.size()) < count) {
        const SurplusPoint x{u(gen) * x1_top, u(gen) * x2_top};
        if (side_of_m(p, x) == Side::d1 && x.x2 < slope * x.x1) pts.push_back(x);
    }
    return pts;
}

/// Largest gap between V(x) and x1 - (b1/b2) x2 + V((b1/b2) x2, x2) over the samples.
inline double check_D1_identity(const ValueField& v, const ModelParams& p, const std::vector<SurplusPoint>& samples) {
    const double r = p.b1 / p.b2;
    double worst = 0.0;
    for (const auto& x : samples) {
        require_surplus(x, "check_D1_identity");
        if (side_of_m(p, x) == Side::d2) throw InvalidInput("check_D1_identity: sample lies above the line M");
        const double proj = extend_value(v, {r * x.x2, x.x2});
        worst = std::max(worst, std::abs(extend_value(v, x) - (x.x1 - r * x.x2 + proj)));
    }
    return worst;
}

struct TildeWitness {
    SurplusPoint point;
    double generator = 0.0;  // L(tilde-V) at the point
    double x2_on_m = 0.0;    // the C-bar level the point sits above
};

struct TildeCheck {
    bool applicable = false;
    std::optional<TildeWitness> witness;
    int probes = 0;
    int positive = 0;
    /// When C-bar is empty: max |W-bar(x) - take-and-run(x)| over the grid.
    double linear_deviation = 0.0;
};

/// Probes L(tilde-V) just above M over the interior of C-bar.
///
/// At each probe the x1 partial is a backward difference of one 1D grid
/// step projected onto x1 and the x2 partial a forward difference, so the
/// whole stencil stays on the D^2 side where tilde-V is smooth in x2.
inline TildeCheck check_tilde_suboptimality(const ModelParams& p, const ClaimLaw& law, const OneDimSolution& wbar) {
    if (validate_params(p).symmetric())
        throw InvalidInput("check_tilde_suboptimality: tilde-V is optimal in the symmetric case");
    TildeCheck out;
    const auto waiting = wbar.bands.waiting();
    if (waiting.empty()) {
        for (int j = 0; j <= wbar.j_max(); ++j)
            out.linear_deviation = std::max(out.linear_deviation, std::abs(wbar.value[static_cast<std::size_t>(j)] - take_and_run_1d(wbar.problem, wbar.x(j))));
        return out;
    }
    out.applicable = true;
    const double r = p.b1 / p.b2;
    const double dx = wbar.dx;
    const TildeSurface surf{&wbar, p};
    for (const auto& iv : waiting) {
        for (int j = static_cast<int>(std::ceil(iv.lo / dx)); (j + 1) * dx <= iv.hi; ++j) {
            if (j < 1) continue;
            const double x2_0 = (j + 0.5) * dx;  // mid-cell keeps the floor away from a node
            const double eta = 1e-7 * (1.0 + x2_0);
            const SurplusPoint x{r * x2_0, x2_0 + eta};
            const double L = continuous_L(surf, p, law, x, DifferenceSteps{r * dx, dx, false, true});
            ++out.probes;
            if (L > 0.0) ++out.positive;
            if (!out.witness || L > out.witness->generator) out.witness = TildeWitness{x, L, x2_0};
        }
    }
    if (out.witness && !(out.witness->generator > 0.0)) out.witness.reset();
    return out;
}

}  // namespace divopt
