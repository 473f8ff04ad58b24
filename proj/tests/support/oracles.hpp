#pragma once

// Independent reference implementations used only by tests. None of these
// call into the library they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

/// Olivero–Longbothum Voigt width (≈0.02 % accurate) from the Lorentzian and
/// Gaussian FWHMs.
inline double voigt_fwhm_olivero(double lorentz_fwhm, double gauss_fwhm) {
    return 0.5346 * lorentz_fwhm +
           std::sqrt(0.2166 * lorentz_fwhm * lorentz_fwhm + gauss_fwhm * gauss_fwhm);
}

/// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
    if (n % 2) ++n;
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

inline double normal_cdf(double x, double mean, double sd) {
    return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

/// Plain Gaussian density.
inline double gauss(double x, double sd) {
    return std::exp(-0.5 * x * x / (sd * sd)) / (std::sqrt(2.0 * std::numbers::pi) * sd);
}

/// Per-bin pair counts by direct enumeration over all (A, B) pairs with
/// both lag orderings: a pair with |t_B − t_A| in [edge_k, edge_{k+1}) counts
/// once for the ordering in which the lag is non-negative.
inline std::vector<std::uint64_t> brute_force_pairs(const std::vector<std::uint64_t>& ta,
                                                    const std::vector<std::uint64_t>& tb,
                                                    const std::vector<std::uint64_t>& edges) {
    std::vector<std::uint64_t> counts(edges.size() - 1, 0);
    auto add = [&](std::uint64_t lag) {
        const auto it = std::upper_bound(edges.begin(), edges.end(), lag);
        if (it == edges.begin() || it == edges.end()) return;
        ++counts[static_cast<std::size_t>(it - edges.begin()) - 1];
    };
    for (auto a : ta)
        for (auto b : tb) {
            if (b >= a) add(b - a);
            if (a >= b) add(a - b);
        }
    return counts;
}

/// Weighted least-squares straight line through (x, y): returns {slope, intercept}.
inline std::pair<double, double> line_fit(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return {slope, (sy - slope * sx) / n};
}

}  // namespace oracle
