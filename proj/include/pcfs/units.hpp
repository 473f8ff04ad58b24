#pragma once

// Unit conventions used throughout the library:
//   optical delay delta, T1, T2, T2*      nanoseconds
//   correlation lag tau, tau_SD, durations seconds
//   angular frequencies / linewidths      rad/ns
// User-facing linewidths are reported as Δω/2π in GHz.

#include <cmath>
#include <numbers>

namespace pcfs {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kLn2 = std::numbers::ln2;

/// FWHM of a Gaussian in units of its standard deviation, 2·sqrt(2 ln 2).
inline const double kGaussFwhmPerSigma = 2.0 * std::sqrt(2.0 * std::numbers::ln2);

inline constexpr double kPicosecondsPerSecond = 1e12;

/// rad/ns -> Δω/2π in GHz.
inline double to_ghz(double omega_rad_per_ns) { return omega_rad_per_ns / kTwoPi; }

/// Δω/2π in GHz -> rad/ns.
inline double from_ghz(double ghz) { return ghz * kTwoPi; }

inline bool all_finite(std::initializer_list<double> values) {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace pcfs
