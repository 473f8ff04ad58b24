#pragma once

// Spectral-diffusion processes for the emitter center frequency ω_c(t):
// a continuous Ornstein–Uhlenbeck diffusion and Poissonian Gaussian random
// jumps inside a fixed envelope. Frequencies in rad/ns, times in seconds.

#include <cstdint>
#include <variant>
#include <vector>

#include "pcfs/rng.hpp"

namespace pcfs {

struct OUProcess {
    double sigma_inf = 1.0;     ///< std of the stationary envelope (rad/ns)
    double tau_sd = 1e-5;       ///< correlation time (s)
    double omega_center = 0.0;  ///< envelope center (rad/ns)

    /// Throws DomainError unless sigma_inf > 0 and tau_sd > 0 (all finite).
    void validate() const;

    /// Stationary inhomogeneous FWHM, 2·sqrt(2 ln2)·sigma_inf.
    double stationary_fwhm() const;

    static OUProcess from_fwhm(double fwhm, double tau_sd, double omega_center = 0.0);
};

struct JumpProcess {
    double sigma_inf = 1.0;     ///< envelope std (rad/ns)
    double tau_sd = 1e-5;       ///< mean time between jumps (s)
    double omega_center = 0.0;  ///< envelope center (rad/ns)

    void validate() const;
    double stationary_fwhm() const;

    /// Probability of no jump during tau: a(τ) = exp(−τ/τ_SD).
    double survival(double tau) const;

    static JumpProcess from_fwhm(double fwhm, double tau_sd, double omega_center = 0.0);
};

using SDProcess = std::variant<OUProcess, JumpProcess>;

void validate(const SDProcess& process);

/// The kernel at τ = 0 is δ(ζ); it is returned as this tag instead of a density.
struct DiracAtZero {
    bool operator==(const DiracAtZero&) const = default;
};

using KernelValue = std::variant<double, DiracAtZero>;

/// OU transition density P(ω, ζ; τ) of the jump ζ given the start ω
/// (ω measured from the envelope center). Gaussian in ζ with mean
/// −ω(1 − e^(−τ/τ_SD)) and variance Σ∞²(1 − e^(−2τ/τ_SD)).
KernelValue ou_kernel(double omega, double zeta, double tau, const OUProcess& p);

double ou_kernel_mean(double omega, double tau, const OUProcess& p);
double ou_kernel_variance(double tau, const OUProcess& p);

/// Σ(τ) = Σ∞·sqrt(1 − e^(−τ/τ_SD)).
double ou_sigma_of_tau(double tau, const OUProcess& p);

/// Spectral correlation of the center frequency for the OU process,
/// (1/(2√π Σ(τ)))·exp(−ζ²/(4Σ(τ)²)). Requires tau > 0.
double ou_p_inhom(double zeta, double tau, const OUProcess& p);

/// a·δ(ζ) + (1 − a)·N(0, gaussian_std²); the Dirac part is kept symbolic.
struct DiracGaussianMixture {
    double dirac_weight = 0.0;
    double gaussian_std = 1.0;

    /// Density of the continuous part, including its (1 − a) weight.
    double continuous_density(double zeta) const;
};

/// Jump-model spectral correlation: weight a(τ) on δ(ζ), the rest on the
/// envelope autocorrelation (Gaussian of std √2·Σ∞).
DiracGaussianMixture jump_p_inhom(double tau, const JumpProcess& p);

struct SDTrajectory {
    std::vector<double> times;   ///< strictly increasing (s)
    std::vector<double> omegas;  ///< center frequency from times[i] on (rad/ns)
    std::uint64_t seed = 0;
};

/// OU trajectory on a regular grid of step `step_s` over [0, duration_s],
/// using the exact AR(1) update from a stationary start.
SDTrajectory sample_trajectory(const OUProcess& p, double duration_s, double step_s,
                               std::uint64_t seed);

/// Jump trajectory, event driven: times[0] = 0 then one entry per jump.
/// omegas[i] holds on [times[i], times[i+1]).
SDTrajectory sample_trajectory(const JumpProcess& p, double duration_s, std::uint64_t seed);

/// Center frequency evaluated lazily at non-decreasing times. The OU state is
/// propagated with the exact transition between consecutive query times; the
/// jump process keeps its next event time. Used by the photon simulator so no
/// dense trajectory is stored.
class LazyTrajectory {
  public:
    LazyTrajectory(const SDProcess& process, Rng& rng);

    /// Advances to time t (s) and returns ω_c(t). t must not decrease.
    double advance_to(double t);

    double current() const { return omega_; }
    std::uint64_t jump_count() const { return jumps_; }

  private:
    SDProcess process_;
    Rng* rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::exponential_distribution<double> exponential_{1.0};
    double time_ = 0.0;
    double omega_ = 0.0;
    double next_jump_ = 0.0;
    std::uint64_t jumps_ = 0;
};

}  // namespace pcfs
