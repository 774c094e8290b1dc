#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "divopt/error.hpp"

namespace divopt {

/// Gauss-Legendre nodes and weights on [-1, 1].
class GaussLegendre {
public:
    explicit GaussLegendre(int order = 8) : nodes_(order), weights_(order) {
        if (order < 1) throw InvalidInput("Gauss-Legendre order must be positive");
        const int half = (order + 1) / 2;
        for (int i = 0; i < half; ++i) {
            double z = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p1 = 1.0, p2 = 0.0;
                for (int j = 0; j < order; ++j) {
                    const double p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1);
                }
                dp = order * (z * p1 - p2) / (z * z - 1.0);
                const double dz = p1 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) break;
            }
            nodes_[i] = -z;
            nodes_[order - 1 - i] = z;
            weights_[i] = weights_[order - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
    }

    int order() const noexcept { return static_cast<int>(nodes_.size()); }
    std::span<const double> nodes() const noexcept { return nodes_; }
    std::span<const double> weights() const noexcept { return weights_; }

    template <class F>
    double integrate(F&& f, double a, double b) const {
        const double mid = 0.5 * (a + b);
        const double half = 0.5 * (b - a);
        double sum = 0.0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) sum += weights_[i] * f(mid + half * nodes_[i]);
        return half * sum;
    }

    /// Composite rule over [a, b] split at the given interior points, which
    /// need not be sorted or unique; points outside (a, b) are ignored.
    template <class F>
    double integrate_split(F&& f, double a, double b, std::vector<double> cuts) const {
        const double eps = 1e-14 * (1.0 + std::abs(b - a));
        std::erase_if(cuts, [&](double c) { return !(c > a + eps && c < b - eps); });
        std::sort(cuts.begin(), cuts.end());
        double sum = 0.0;
        double lo = a;
        for (double c : cuts) {
            if (c - lo <= eps) continue;
            sum += integrate(f, lo, c);
            lo = c;
        }
        if (b - lo > 0.0) sum += integrate(f, lo, b);
        return sum;
    }

private:
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

}  // namespace divopt
