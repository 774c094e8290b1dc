#pragma once

// Risk-model parameters, claim-size laws, grid geometry and the closed-form
// affine-moment integrals every quadrature in the library is built on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>

#include "divopt/error.hpp"

namespace divopt {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Two-branch compound Poisson model: branch i collects premium at rate c_i
/// and pays the fraction b_i of every claim.
struct ModelParams {
    double c1 = 0.0;
    double c2 = 0.0;
    double b1 = 0.5;
    double b2 = 0.5;
    double lambda = 0.0;  // claim intensity
    double q = 0.0;       // discount rate
};

enum class Symmetry { symmetric, strict };

struct ValidatedParams {
    ModelParams params;
    Symmetry kind;

    bool symmetric() const noexcept { return kind == Symmetry::symmetric; }
};

/// Checks b1 + b2 = 1, positivity and the normalisation c1/b1 >= c2/b2.
/// Throws InvalidInput otherwise.
inline ValidatedParams validate_params(const ModelParams& p) {
    auto fail = [](const std::string& msg) { throw InvalidInput("invalid model parameters: " + msg); };
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(p.c1) || !finite(p.c2) || !finite(p.b1) || !finite(p.b2) || !finite(p.lambda) || !finite(p.q))
        fail("non-finite value");
    if (p.c1 <= 0.0 || p.c2 <= 0.0) fail("premium rates must be positive");
    if (p.b1 <= 0.0 || p.b2 <= 0.0) fail("claim proportions must be positive");
    if (std::abs(p.b1 + p.b2 - 1.0) > 1e-12) fail("b1 + b2 must equal 1");
    if (p.lambda <= 0.0) fail("claim intensity must be positive");
    if (p.q <= 0.0) fail("discount rate must be positive");
    const double ratio1 = p.c1 / p.b1;
    const double ratio2 = p.c2 / p.b2;
    const double scale = std::max(ratio1, ratio2);
    if (ratio1 < ratio2 - 1e-12 * scale)
        fail("c1/b1 < c2/b2; swap the branch labels so that branch 1 earns more premium per unit of claim");
    const Symmetry kind = std::abs(ratio1 - ratio2) <= 1e-12 * scale ? Symmetry::symmetric : Symmetry::strict;
    return {p, kind};
}

// ---------------------------------------------------------------------------
// Claim-size laws
// ---------------------------------------------------------------------------

namespace detail {
template <class... Ts>
struct Overload : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overload(Ts...) -> Overload<Ts...>;
}  // namespace detail

struct Exponential {
    double rate;
};

/// Gamma law with shape 2: G(x) = 1 - (1 + r x) e^{-r x}.
struct Erlang2 {
    double rate;
};

/// Point mass at `atom`.
struct Deterministic {
    double atom;
};

class ClaimLaw {
public:
    using Variant = std::variant<Exponential, Erlang2, Deterministic>;

    ClaimLaw(Exponential e) : law_(e) { check(e.rate, "exponential rate"); }
    ClaimLaw(Erlang2 e) : law_(e) { check(e.rate, "erlang2 rate"); }
    ClaimLaw(Deterministic d) : law_(d) { check(d.atom, "deterministic atom"); }

    const Variant& variant() const noexcept { return law_; }

    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        std::visit(detail::Overload{[&](const Exponential& e) { os << "exponential(rate=" << e.rate << ")"; },
                            [&](const Erlang2& e) { os << "erlang2(rate=" << e.rate << ")"; },
                            [&](const Deterministic& d) { os << "deterministic(atom=" << d.atom << ")"; }},
                   law_);
        return os.str();
    }

    /// Atom location, if the law has one.
    std::optional<double> atom() const {
        if (const auto* d = std::get_if<Deterministic>(&law_)) return d->atom;
        return std::nullopt;
    }

    double mean() const {
        return std::visit(detail::Overload{[](const Exponential& e) { return 1.0 / e.rate; },
                                   [](const Erlang2& e) { return 2.0 / e.rate; },
                                   [](const Deterministic& d) { return d.atom; }},
                          law_);
    }

    /// P(U > x) for x >= 0 (right-continuous cdf, so the atom sits in cdf(atom)).
    double survival(double x) const {
        if (x < 0.0) return 1.0;
        if (x == kInf) return 0.0;
        return std::visit(detail::Overload{[&](const Exponential& e) { return std::exp(-e.rate * x); },
                                   [&](const Erlang2& e) {
                                       const double rx = e.rate * x;
                                       return (1.0 + rx) * std::exp(-rx);
                                   },
                                   [&](const Deterministic& d) { return x < d.atom ? 1.0 : 0.0; }},
                          law_);
    }

    double cdf(double x) const { return 1.0 - survival(x); }

    /// Integral of (p + s*alpha) dG(alpha) over the half-open interval (a, b].
    double integrate_affine(double a, double b, double p, double s) const {
        if (a == b) return 0.0;
        return std::visit(detail::Overload{[&](const Exponential& e) { return exp_affine(e.rate, a, b, p, s); },
                                   [&](const Erlang2& e) { return erlang_affine(e.rate, a, b, p, s); },
                                   [&](const Deterministic& d) {
                                       return (a < d.atom && d.atom <= b) ? p + s * d.atom : 0.0;
                                   }},
                          law_);
    }

    /// Draws one claim by inversion from a uniform in [0, 1).
    double sample_from_uniform(double u, double u2) const {
        return std::visit(detail::Overload{[&](const Exponential& e) { return -std::log1p(-u) / e.rate; },
                                           [&](const Erlang2& e) { return -(std::log1p(-u) + std::log1p(-u2)) / e.rate; },
                                           [&](const Deterministic& d) { return d.atom; }},
                          law_);
    }

    template <class URBG>
    double sample(URBG& gen) const {
        const double u = uniform01(gen);
        const double u2 = std::holds_alternative<Erlang2>(law_) ? uniform01(gen) : 0.0;
        return sample_from_uniform(u, u2);
    }

    /// 53 random bits mapped to [0, 1); independent of the standard library's distributions.
    template <class URBG>
    static double uniform01(URBG& gen) {
        static_assert(URBG::min() == 0 && URBG::max() == std::numeric_limits<std::uint64_t>::max(),
                      "uniform01 needs a 64-bit generator");
        return static_cast<double>(gen() >> 11) * 0x1.0p-53;
    }

private:
    static void check(double v, const char* what) {
        if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput(std::string(what) + " must be positive and finite");
    }

    static double ex(double r, double x) { return x == kInf ? 0.0 : std::exp(-r * x); }

    // density d e^{-d a}; antiderivative of alpha*density is -(alpha + 1/d) e^{-d alpha}
    static double exp_affine(double d, double a, double b, double p, double s) {
        const double ea = ex(d, a);
        const double eb = ex(d, b);
        const double mass = ea - eb;
        const double first = (a + 1.0 / d) * ea - (b == kInf ? 0.0 : (b + 1.0 / d) * eb);
        return p * mass + s * first;
    }

    // density r^2 alpha e^{-r alpha}
    static double erlang_affine(double r, double a, double b, double p, double s) {
        auto surv = [&](double x) { return x == kInf ? 0.0 : (1.0 + r * x) * std::exp(-r * x); };
        // antiderivative of r^2 alpha^2 e^{-r alpha} is -e^{-r alpha}(r alpha^2 + 2 alpha + 2/r)
        auto tail1 = [&](double x) { return x == kInf ? 0.0 : std::exp(-r * x) * (r * x * x + 2.0 * x + 2.0 / r); };
        return p * (surv(a) - surv(b)) + s * (tail1(a) - tail1(b));
    }

    Variant law_;
};

inline double claim_cdf(const ClaimLaw& law, double x) {
    if (!(x >= 0.0)) throw InvalidInput("claim_cdf: claim size must be nonnegative");
    return law.cdf(x);
}

inline double integrate_affine(const ClaimLaw& law, double a, double b, double p, double s) {
    if (!(a >= 0.0) || std::isnan(b)) throw InvalidInput("integrate_affine: limits must satisfy 0 <= a");
    if (a > b) throw InvalidInput("integrate_affine: lower limit exceeds upper limit");
    return law.integrate_affine(a, b, p, s);
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

struct SurplusPoint {
    double x1 = 0.0;
    double x2 = 0.0;
};

inline void require_surplus(const SurplusPoint& x, const char* who) {
    if (!std::isfinite(x.x1) || !std::isfinite(x.x2) || x.x1 < 0.0 || x.x2 < 0.0)
        throw InvalidInput(std::string(who) + ": surplus must be finite and nonnegative");
}

/// Which side of the line x2 = (b2/b1) x1 a point lies on.
enum class Side { d1, on_m, d2 };

inline Side side_of_m(const ModelParams& p, const SurplusPoint& x, double tol = 1e-12) {
    const double diff = (p.b2 / p.b1) * x.x1 - x.x2;
    const double scale = 1.0 + std::abs(x.x1) + std::abs(x.x2);
    if (diff > tol * scale) return Side::d1;
    if (diff < -tol * scale) return Side::d2;
    return Side::on_m;
}

/// Lattice {(n dx1, m dx2)} with dx_i = c_i delta, truncated at (n_max, m_max).
struct GridSpec {
    double delta = 0.0;
    double dx1 = 0.0;
    double dx2 = 0.0;
    int n_max = 0;
    int m_max = 0;

    int rows() const noexcept { return n_max + 1; }
    int cols() const noexcept { return m_max + 1; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(rows()) * static_cast<std::size_t>(cols()); }
    double x1(int n) const noexcept { return n * dx1; }
    double x2(int m) const noexcept { return m * dx2; }
};

inline GridSpec make_grid(const ModelParams& p, double delta, int n_max, int m_max) {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidInput("grid: delta must be positive");
    if (n_max < 2 || m_max < 2) throw InvalidInput("grid: n_max and m_max must be at least 2");
    return {delta, p.c1 * delta, p.c2 * delta, n_max, m_max};
}

/// Truncation given in currency; n_max = round(x1_max / dx1).
inline GridSpec make_grid_for_window(const ModelParams& p, double delta, double x1_max, double x2_max) {
    if (!(delta > 0.0)) throw InvalidInput("grid: delta must be positive");
    const int n = static_cast<int>(std::lround(x1_max / (p.c1 * delta)));
    const int m = static_cast<int>(std::lround(x2_max / (p.c2 * delta)));
    return make_grid(p, delta, n, m);
}

}  // namespace divopt
