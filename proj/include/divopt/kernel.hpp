#pragma once

// Exact tabulation of the claim integral of the discrete scheme.
//
// Write t = s*delta with s in [0, 1]. A claim of size alpha arriving at t
// moves grid point (n, m) to (n - k1, m - k2) with
//     k1 = ceil(b1*alpha/dx1 - s),   k2 = ceil(b2*alpha/dx2 - s),
// so the post-claim offset does not depend on (n, m). The claim is survivable
// iff n - k1 >= 0 and m - k2 >= 0, which is exactly the inclusive upper limit
// (n dx1 + c1 t)/b1 ^ (m dx2 + c2 t)/b2 of the alpha integral. For each offset
// the alpha cell is the intersection of ((k1-1+s)h1, (k1+s)h1] and
// ((k2-1+s)h2, (k2+s)h2] with h_i = dx_i/b_i; its end points are affine in s,
// so the alpha integrals are closed-form and only the outer s integral needs
// quadrature, split where the active bounds or an atom crossing change.

#include <algorithm>
#include <cmath>
#include <vector>

#include "divopt/model.hpp"
#include "divopt/quadrature.hpp"

namespace divopt {

/// Weights for one value of k1: offsets k2_first, k2_first+1, ...
struct KernelRow {
    int k2_first = 0;
    std::vector<double> weight;    // discounted probability of landing at the offset
    std::vector<double> dividend;  // discounted expected rounding dividend paid there
};

struct ClaimKernel2D {
    std::vector<KernelRow> rows;  // indexed by k1
};

namespace detail {

struct CellBounds {
    // bound = (offset + s) * h
    double lo_off[2];
    double lo_h[2];
    double hi_off[2];
    double hi_h[2];
    int n_lo;
    int n_hi;
};

inline void crossing_points(const CellBounds& c, const std::optional<double>& atom, std::vector<double>& cuts) {
    cuts.clear();
    auto add_pair = [&](double a_off, double a_h, double b_off, double b_h) {
        if (std::abs(a_h - b_h) <= 1e-15 * std::max(a_h, b_h)) return;
        cuts.push_back((b_off * b_h - a_off * a_h) / (a_h - b_h));
    };
    double offs[4], hs[4];
    int k = 0;
    for (int i = 0; i < c.n_lo; ++i) offs[k] = c.lo_off[i], hs[k++] = c.lo_h[i];
    for (int i = 0; i < c.n_hi; ++i) offs[k] = c.hi_off[i], hs[k++] = c.hi_h[i];
    for (int i = 0; i < k; ++i) {
        cuts.push_back(-offs[i]);  // bound crosses zero
        if (atom) cuts.push_back(*atom / hs[i] - offs[i]);
        for (int j = i + 1; j < k; ++j) add_pair(offs[i], hs[i], offs[j], hs[j]);
    }
}

}  // namespace detail

/// Builds the two-dimensional kernel for offsets k1 <= k1_max, k2 <= k2_max.
inline ClaimKernel2D build_kernel_2d(const ModelParams& p, const ClaimLaw& law, const GridSpec& g,
                                     const GaussLegendre& gl) {
    ClaimKernel2D kernel;
    kernel.rows.resize(static_cast<std::size_t>(g.n_max) + 1);
    if (p.lambda == 0.0) return kernel;

    const double h1 = g.dx1 / p.b1;
    const double h2 = g.dx2 / p.b2;
    const double r = h1 / h2;
    const double rate = p.lambda + p.q;
    const auto atom = law.atom();
    std::vector<double> cuts;

    for (int k1 = 0; k1 <= g.n_max; ++k1) {
        KernelRow& row = kernel.rows[static_cast<std::size_t>(k1)];
        const int k2_lo = std::max(0, static_cast<int>(std::floor((k1 - 1) * r)) - 1);
        const int k2_hi = std::min(g.m_max, static_cast<int>(std::ceil((k1 + 1) * r)) + 1);
        std::vector<double> w, d;
        int first = -1;
        for (int k2 = k2_lo; k2 <= k2_hi; ++k2) {
            detail::CellBounds cb{{k1 - 1.0, k2 - 1.0}, {h1, h2}, {double(k1), double(k2)}, {h1, h2}, 2, 2};
            detail::crossing_points(cb, atom, cuts);
            double wsum = 0.0, dsum = 0.0;
            auto cell = [&](double s, bool div) {
                const double lo = std::max({(k1 - 1 + s) * h1, (k2 - 1 + s) * h2, 0.0});
                const double hi = std::min((k1 + s) * h1, (k2 + s) * h2);
                if (!(hi > lo)) return 0.0;
                const double t = s * g.delta;
                const double disc = p.lambda * g.delta * std::exp(-rate * t);
                if (!div) return disc * law.integrate_affine(lo, hi, 1.0, 0.0);
                const double base = k1 * g.dx1 + k2 * g.dx2 + (p.c1 + p.c2) * t;
                return disc * law.integrate_affine(lo, hi, base, -1.0);
            };
            wsum = gl.integrate_split([&](double s) { return cell(s, false); }, 0.0, 1.0, cuts);
            dsum = gl.integrate_split([&](double s) { return cell(s, true); }, 0.0, 1.0, cuts);
            if (first < 0) {
                if (wsum == 0.0 && dsum == 0.0) continue;
                first = k2;
            }
            w.push_back(wsum);
            d.push_back(dsum);
        }
        while (!w.empty() && w.back() == 0.0 && d.back() == 0.0) {
            w.pop_back();
            d.pop_back();
        }
        row.k2_first = std::max(first, 0);
        row.weight = std::move(w);
        row.dividend = std::move(d);
    }
    return kernel;
}

/// One-dimensional analogue: surplus grid step dx, claims b*U, payouts scaled by rho.
struct ClaimKernel1D {
    std::vector<double> weight;    // indexed by downward offset j
    std::vector<double> dividend;  // rho times the discounted rounding dividend
};

inline ClaimKernel1D build_kernel_1d(double c, double b, const ClaimLaw& law, double lambda, double q, double delta,
                                     double rho, int j_max, const GaussLegendre& gl) {
    ClaimKernel1D kernel;
    kernel.weight.assign(static_cast<std::size_t>(j_max) + 1, 0.0);
    kernel.dividend.assign(static_cast<std::size_t>(j_max) + 1, 0.0);
    if (lambda == 0.0) return kernel;
    const double dx = c * delta;
    const double h = dx / b;
    const double rate = lambda + q;
    const auto atom = law.atom();
    std::vector<double> cuts;
    for (int j = 0; j <= j_max; ++j) {
        detail::CellBounds cb{{j - 1.0, 0.0}, {h, 0.0}, {double(j), 0.0}, {h, 0.0}, 1, 1};
        detail::crossing_points(cb, atom, cuts);
        auto cell = [&](double s, bool div) {
            const double lo = std::max((j - 1 + s) * h, 0.0);
            const double hi = (j + s) * h;
            if (!(hi > lo)) return 0.0;
            const double t = s * delta;
            const double disc = lambda * delta * std::exp(-rate * t);
            if (!div) return disc * law.integrate_affine(lo, hi, 1.0, 0.0);
            return disc * rho * law.integrate_affine(lo, hi, j * dx + c * t, -b);
        };
        kernel.weight[static_cast<std::size_t>(j)] = gl.integrate_split([&](double s) { return cell(s, false); }, 0.0, 1.0, cuts);
        kernel.dividend[static_cast<std::size_t>(j)] = gl.integrate_split([&](double s) { return cell(s, true); }, 0.0, 1.0, cuts);
    }
    return kernel;
}

}  // namespace divopt
