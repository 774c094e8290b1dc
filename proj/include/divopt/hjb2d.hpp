#pragma once

// Discrete HJB operators on the lattice: the lump operators T1/T2, the
// no-dividend operator T0 with its exact claim integral, their maximum T, and
// the continuous generator L used as a diagnostic.

#include <algorithm>
#include <array>
#include <bit>
#include <cassert>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "divopt/kernel.hpp"
#include "divopt/model.hpp"
#include "divopt/quadrature.hpp"

namespace divopt {

/// Tabulated lattice function v(n, m), 0 <= n <= n_max, 0 <= m <= m_max.
class ValueField {
public:
    ValueField() = default;
    explicit ValueField(const GridSpec& g, double fill = 0.0) : grid_(g), values_(g.size(), fill) {}

    const GridSpec& grid() const noexcept { return grid_; }

    double& operator()(int n, int m) noexcept { return values_[index(n, m)]; }
    double operator()(int n, int m) const noexcept { return values_[index(n, m)]; }

    /// Lookup with the unit-slope extension past the truncation.
    double ext(int n, int m) const noexcept {
        const int nn = std::min(n, grid_.n_max);
        const int mm = std::min(m, grid_.m_max);
        return (*this)(nn, mm) + (n - nn) * grid_.dx1 + (m - mm) * grid_.dx2;
    }

    std::span<double> row(int n) noexcept { return {values_.data() + index(n, 0), static_cast<std::size_t>(grid_.cols())}; }
    std::span<const double> row(int n) const noexcept {
        return {values_.data() + index(n, 0), static_cast<std::size_t>(grid_.cols())};
    }

    std::span<double> data() noexcept { return values_; }
    std::span<const double> data() const noexcept { return values_; }

    /// Floor-plus-remainder extension to an arbitrary point of the quadrant.
    double extend(const SurplusPoint& x) const noexcept {
        const double f1 = std::floor(x.x1 / grid_.dx1);
        const double f2 = std::floor(x.x2 / grid_.dx2);
        const int n = static_cast<int>(f1);
        const int m = static_cast<int>(f2);
        return ext(n, m) + (x.x1 - f1 * grid_.dx1) + (x.x2 - f2 * grid_.dx2);
    }

private:
    std::size_t index(int n, int m) const noexcept {
        assert(n >= 0 && n <= grid_.n_max && m >= 0 && m <= grid_.m_max);
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(grid_.cols()) + static_cast<std::size_t>(m);
    }

    GridSpec grid_{};
    std::vector<double> values_;
};

enum class Action : std::uint8_t { E1 = 1, E2 = 2, E0 = 4, Es = 8 };

inline const char* to_string(Action a) {
    switch (a) {
        case Action::E1: return "E1";
        case Action::E2: return "E2";
        case Action::E0: return "E0";
        case Action::Es: return "Es";
    }
    return "?";
}

/// Small set of actions stored as a bit mask.
class ActionSet {
public:
    constexpr ActionSet() = default;
    constexpr explicit ActionSet(std::uint8_t bits) : bits_(bits) {}

    constexpr void insert(Action a) noexcept { bits_ |= static_cast<std::uint8_t>(a); }
    constexpr bool contains(Action a) const noexcept { return (bits_ & static_cast<std::uint8_t>(a)) != 0; }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr int size() const noexcept { return std::popcount(bits_); }
    constexpr std::uint8_t bits() const noexcept { return bits_; }
    constexpr bool operator==(const ActionSet&) const = default;

    std::string str() const {
        std::string s = "{";
        for (Action a : {Action::E0, Action::E1, Action::E2, Action::Es}) {
            if (!contains(a)) continue;
            if (s.size() > 1) s += ' ';
            s += to_string(a);
        }
        return s + "}";
    }

private:
    std::uint8_t bits_ = 0;
};

inline constexpr double kTieTolerance = 1e-9;

inline double tie_epsilon(double max_value, double eps_tie = kTieTolerance) {
    return eps_tie * (1.0 + std::abs(max_value));
}

enum class Axis { one = 1, two = 2 };

struct SolveReport {
    int iterations = 0;
    double final_increment = 0.0;
    double tolerance = 0.0;
    double residual = 0.0;
    double wall_seconds = 0.0;
    /// Largest decrease of any grid value over one sweep (0 when monotone).
    double worst_decrease = 0.0;
    std::string mode;
};

/// The discrete scheme for one (model, claim law, grid) triple. Holds the
/// precomputed claim kernel; all operator evaluations are const.
class DiscreteHjb {
public:
    DiscreteHjb(const ModelParams& p, const ClaimLaw& law, const GridSpec& g, int gl_order = 8)
        : params_(p), law_(law), grid_(g), gl_(gl_order) {
        if (!(p.lambda >= 0.0) || !(p.q > 0.0) || !(p.c1 > 0.0) || !(p.c2 > 0.0) || !(p.b1 > 0.0) || !(p.b2 > 0.0))
            throw InvalidInput("DiscreteHjb: parameters out of range");
        if (std::abs(g.dx1 - p.c1 * g.delta) > 1e-12 * g.dx1 || std::abs(g.dx2 - p.c2 * g.delta) > 1e-12 * g.dx2)
            throw InvalidInput("DiscreteHjb: grid spacings must equal c_i * delta");
        decay_ = std::exp(-(p.q + p.lambda) * g.delta);
        kernel_ = build_kernel_2d(p, law, g, gl_);
        build_dividend_table();
    }

    const ModelParams& params() const noexcept { return params_; }
    const ClaimLaw& law() const noexcept { return law_; }
    const GridSpec& grid() const noexcept { return grid_; }
    const ClaimKernel2D& kernel() const noexcept { return kernel_; }
    const GaussLegendre& quadrature() const noexcept { return gl_; }
    double decay() const noexcept { return decay_; }
    /// Kernel weight of the zero offset: a claim that keeps (n, m) in place.
    double self_weight() const noexcept {
        const KernelRow& kr = kernel_.rows.front();
        return kr.k2_first == 0 && !kr.weight.empty() ? kr.weight.front() : 0.0;
    }

    /// Expected discounted rounding dividends of the claim integral at (n, m).
    double claim_dividends(int n, int m) const noexcept {
        return dividends_[static_cast<std::size_t>(n) * grid_.cols() + static_cast<std::size_t>(m)];
    }

    /// Claim integral I^delta(v)(n, m).
    double integral(const ValueField& v, int n, int m) const noexcept {
        double acc = 0.0;
        for (int k1 = 0; k1 <= n; ++k1) {
            const KernelRow& kr = kernel_.rows[static_cast<std::size_t>(k1)];
            const auto src = v.row(n - k1);
            const int cnt = static_cast<int>(kr.weight.size());
            for (int j = 0; j < cnt; ++j) {
                const int k2 = kr.k2_first + j;
                if (k2 > m) break;
                acc += kr.weight[static_cast<std::size_t>(j)] * src[static_cast<std::size_t>(m - k2)];
            }
        }
        return acc + claim_dividends(n, m);
    }

    double t0(const ValueField& v, int n, int m) const noexcept { return decay_ * v.ext(n + 1, m + 1) + integral(v, n, m); }

    /// T0 for a whole row n; `out` must have m_max + 1 entries.
    void t0_row(const ValueField& v, int n, std::span<double> out) const noexcept {
        const int cols = grid_.cols();
        const double* div = dividends_.data() + static_cast<std::size_t>(n) * cols;
        if (n < grid_.n_max) {
            const auto up = v.row(n + 1);
            for (int m = 0; m + 1 < cols; ++m) out[m] = decay_ * up[m + 1] + div[m];
            out[cols - 1] = decay_ * (up[cols - 1] + grid_.dx2) + div[cols - 1];
        } else {
            const auto same = v.row(n);
            for (int m = 0; m + 1 < cols; ++m) out[m] = decay_ * (same[m + 1] + grid_.dx1) + div[m];
            out[cols - 1] = decay_ * (same[cols - 1] + grid_.dx1 + grid_.dx2) + div[cols - 1];
        }
        double* o = out.data();
        for (int k1 = 0; k1 <= n; ++k1) {
            const KernelRow& kr = kernel_.rows[static_cast<std::size_t>(k1)];
            const double* src = v.row(n - k1).data();
            const int cnt = static_cast<int>(kr.weight.size());
            for (int j = 0; j < cnt; ++j) {
                const int k2 = kr.k2_first + j;
                if (k2 >= cols) break;
                const double w = kr.weight[static_cast<std::size_t>(j)];
                const double* s = src - k2;
                for (int m = k2; m < cols; ++m) o[m] += w * s[m];
            }
        }
    }

private:
    void build_dividend_table() {
        const int rows = grid_.rows();
        const int cols = grid_.cols();
        dividends_.assign(grid_.size(), 0.0);
        for (int k1 = 0; k1 < rows; ++k1) {
            const KernelRow& kr = kernel_.rows[static_cast<std::size_t>(k1)];
            for (std::size_t j = 0; j < kr.dividend.size(); ++j) {
                const int k2 = kr.k2_first + static_cast<int>(j);
                if (k2 < cols) dividends_[static_cast<std::size_t>(k1) * cols + k2] += kr.dividend[j];
            }
        }
        // 2D prefix sums: entry (n, m) collects all offsets k1 <= n, k2 <= m.
        for (int n = 0; n < rows; ++n) {
            double* r = dividends_.data() + static_cast<std::size_t>(n) * cols;
            for (int m = 1; m < cols; ++m) r[m] += r[m - 1];
            if (n > 0) {
                const double* prev = r - cols;
                for (int m = 0; m < cols; ++m) r[m] += prev[m];
            }
        }
    }

    ModelParams params_;
    ClaimLaw law_;
    GridSpec grid_;
    GaussLegendre gl_;
    double decay_ = 0.0;
    ClaimKernel2D kernel_;
    std::vector<double> dividends_;
};

// ---------------------------------------------------------------------------
// Point operators
// ---------------------------------------------------------------------------

inline void require_in_grid(const GridSpec& g, int n, int m, const char* who) {
    if (n < 0 || m < 0 || n > g.n_max || m > g.m_max) throw InvalidInput(std::string(who) + ": index outside the grid");
}

inline double op_lump(const ValueField& v, int n, int m, Axis axis) {
    require_in_grid(v.grid(), n, m, "op_lump");
    if (axis == Axis::one) {
        if (n == 0) throw InvalidInput("op_lump: E1 needs n > 0");
        return v(n - 1, m) + v.grid().dx1;
    }
    if (m == 0) throw InvalidInput("op_lump: E2 needs m > 0");
    return v(n, m - 1) + v.grid().dx2;
}

inline double integral_I_delta(const DiscreteHjb& hjb, const ValueField& v, int n, int m) {
    require_in_grid(v.grid(), n, m, "integral_I_delta");
    return hjb.integral(v, n, m);
}

inline double op_T0(const DiscreteHjb& hjb, const ValueField& v, int n, int m) {
    require_in_grid(v.grid(), n, m, "op_T0");
    return hjb.t0(v, n, m);
}

struct TResult {
    double value;
    ActionSet argmax;
};

/// Argmax set from already computed operator values (NaN marks "not applicable").
inline TResult select_actions(double t0, double t1, double t2, double eps_tie = kTieTolerance) {
    double best = t0;
    if (t1 > best) best = t1;
    if (t2 > best) best = t2;
    const double eps = tie_epsilon(best, eps_tie);
    ActionSet set;
    if (t0 >= best - eps) set.insert(Action::E0);
    if (t1 >= best - eps) set.insert(Action::E1);
    if (t2 >= best - eps) set.insert(Action::E2);
    return {best, set};
}

inline TResult op_T(const DiscreteHjb& hjb, const ValueField& v, int n, int m, double eps_tie = kTieTolerance) {
    require_in_grid(v.grid(), n, m, "op_T");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double t0 = hjb.t0(v, n, m);
    const double t1 = n > 0 ? v(n - 1, m) + v.grid().dx1 : nan;
    const double t2 = m > 0 ? v(n, m - 1) + v.grid().dx2 : nan;
    return select_actions(t0, t1, t2, eps_tie);
}

// ---------------------------------------------------------------------------
// Continuous generator
// ---------------------------------------------------------------------------

/// A function on the quadrant that is affine in alpha along every claim ray
/// x - alpha (b1, b2) between the breakpoints reported by `ray_breaks`.
template <class S>
concept RaySurface = requires(const S& s, SurplusPoint x, double amax) {
    { s.value(x) } -> std::convertible_to<double>;
    { s.ray_breaks(x, amax) } -> std::convertible_to<std::vector<double>>;
};

namespace detail {
// alpha values in (0, amax) where (x - b alpha)/dx crosses an integer.
inline void lattice_breaks(double x, double b, double dx, double amax, std::vector<double>& out) {
    const double top = std::floor(x / dx);
    for (double k = top; k >= 0.0; k -= 1.0) {
        const double a = (x - k * dx) / b;
        if (a >= amax) break;
        if (a > 0.0) out.push_back(a);
    }
}
}  // namespace detail

/// The floor-plus-remainder extension of a lattice field, viewed as a RaySurface.
struct GridSurface {
    const ValueField* field;
    ModelParams params;

    double value(const SurplusPoint& x) const { return field->extend(x); }

    std::vector<double> ray_breaks(const SurplusPoint& x, double amax) const {
        std::vector<double> out;
        detail::lattice_breaks(x.x1, params.b1, field->grid().dx1, amax, out);
        detail::lattice_breaks(x.x2, params.b2, field->grid().dx2, amax, out);
        return out;
    }
};

/// lambda * integral over (0, (x1/b1) ^ (x2/b2)] of u(x - alpha b) dG, exact for RaySurfaces.
template <RaySurface S>
double continuous_integral(const S& u, const ModelParams& p, const ClaimLaw& law, const SurplusPoint& x) {
    if (p.lambda == 0.0) return 0.0;
    const double amax = std::min(x.x1 / p.b1, x.x2 / p.b2);
    std::vector<double> cuts = u.ray_breaks(x, amax);
    cuts.push_back(0.0);
    cuts.push_back(amax);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    auto at = [&](double a) { return u.value({std::max(0.0, x.x1 - p.b1 * a), std::max(0.0, x.x2 - p.b2 * a)}); };
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double lo = cuts[i];
        const double hi = cuts[i + 1];
        if (!(hi > lo)) continue;
        const double a1 = lo + (hi - lo) / 3.0;
        const double a2 = lo + 2.0 * (hi - lo) / 3.0;
        const double u1 = at(a1);
        const double u2 = at(a2);
        const double slope = (u2 - u1) / (a2 - a1);
        acc += law.integrate_affine(lo, hi, u1 - slope * a1, slope);
    }
    return p.lambda * acc;
}

struct DifferenceSteps {
    double h1;
    double h2;
    bool forward1 = true;
    bool forward2 = true;
};

/// L(u)(x) = c1 u_x1 + c2 u_x2 - (q + lambda) u + I(u), partials by one-sided differences.
template <RaySurface S>
double continuous_L(const S& u, const ModelParams& p, const ClaimLaw& law, const SurplusPoint& x,
                    const DifferenceSteps& steps) {
    require_surplus(x, "continuous_L");
    const double ux = u.value(x);
    auto diff = [&](const SurplusPoint& y, double h, bool fwd) {
        if (y.x1 < 0.0 || y.x2 < 0.0) throw InvalidInput("continuous_L: difference stencil leaves the quadrant");
        const double uy = u.value(y);
        return fwd ? (uy - ux) / h : (ux - uy) / h;
    };
    const double d1 = diff({x.x1 + (steps.forward1 ? steps.h1 : -steps.h1), x.x2}, steps.h1, steps.forward1);
    const double d2 = diff({x.x1, x.x2 + (steps.forward2 ? steps.h2 : -steps.h2)}, steps.h2, steps.forward2);
    return p.c1 * d1 + p.c2 * d2 - (p.q + p.lambda) * ux + continuous_integral(u, p, law, x);
}

/// L evaluated on the continuous extension of a lattice field with forward steps dx1, dx2.
inline double continuous_L(const ValueField& v, const ModelParams& p, const ClaimLaw& law, const SurplusPoint& x) {
    require_surplus(x, "continuous_L");
    const auto& g = v.grid();
    if (x.x1 + g.dx1 > g.n_max * g.dx1 + 1e-12 || x.x2 + g.dx2 > g.m_max * g.dx2 + 1e-12)
        throw InvalidInput("continuous_L: point outside the truncated domain");
    return continuous_L(GridSurface{&v, p}, p, law, x, DifferenceSteps{g.dx1, g.dx2});
}

}  // namespace divopt
