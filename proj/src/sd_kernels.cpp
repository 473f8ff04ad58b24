#include "pcfs/sd_kernels.hpp"

#include <cmath>

#include "pcfs/errors.hpp"
#include "pcfs/units.hpp"

namespace pcfs {

namespace {

void check_envelope(double sigma_inf, double tau_sd, double omega_center, const char* what) {
    if (!all_finite({sigma_inf, tau_sd, omega_center}))
        throw DomainError(std::string(what) + ": non-finite parameter");
    if (sigma_inf <= 0.0) throw DomainError(std::string(what) + ": sigma_inf must be > 0");
    if (tau_sd <= 0.0) throw DomainError(std::string(what) + ": tau_sd must be > 0");
}

// 1 - exp(-x) without cancellation for small x.
double one_minus_exp_neg(double x) { return -std::expm1(-x); }

}  // namespace

void OUProcess::validate() const { check_envelope(sigma_inf, tau_sd, omega_center, "OUProcess"); }

double OUProcess::stationary_fwhm() const { return kGaussFwhmPerSigma * sigma_inf; }

OUProcess OUProcess::from_fwhm(double fwhm, double tau_sd, double omega_center) {
    OUProcess p{fwhm / kGaussFwhmPerSigma, tau_sd, omega_center};
    p.validate();
    return p;
}

void JumpProcess::validate() const {
    check_envelope(sigma_inf, tau_sd, omega_center, "JumpProcess");
}

double JumpProcess::stationary_fwhm() const { return kGaussFwhmPerSigma * sigma_inf; }

double JumpProcess::survival(double tau) const {
    if (!std::isfinite(tau) && tau > 0) return 0.0;
    if (!(tau >= 0.0)) throw DomainError("JumpProcess::survival: tau must be >= 0");
    return std::exp(-tau / tau_sd);
}

JumpProcess JumpProcess::from_fwhm(double fwhm, double tau_sd, double omega_center) {
    JumpProcess p{fwhm / kGaussFwhmPerSigma, tau_sd, omega_center};
    p.validate();
    return p;
}

void validate(const SDProcess& process) {
    std::visit([](const auto& p) { p.validate(); }, process);
}

double ou_kernel_mean(double omega, double tau, const OUProcess& p) {
    return -omega * one_minus_exp_neg(tau / p.tau_sd);
}

double ou_kernel_variance(double tau, const OUProcess& p) {
    return p.sigma_inf * p.sigma_inf * one_minus_exp_neg(2.0 * tau / p.tau_sd);
}

KernelValue ou_kernel(double omega, double zeta, double tau, const OUProcess& p) {
    p.validate();
    if (!all_finite({omega, zeta}) || std::isnan(tau))
        throw DomainError("ou_kernel: non-finite input");
    if (tau < 0.0) throw DomainError("ou_kernel: tau must be >= 0");
    if (tau == 0.0) return DiracAtZero{};
    const double var = ou_kernel_variance(tau, p);
    const double d = zeta - ou_kernel_mean(omega, tau, p);
    return std::exp(-d * d / (2.0 * var)) / std::sqrt(kTwoPi * var);
}

double ou_sigma_of_tau(double tau, const OUProcess& p) {
    if (!(tau >= 0.0)) throw DomainError("ou_sigma_of_tau: tau must be >= 0");
    return p.sigma_inf * std::sqrt(one_minus_exp_neg(tau / p.tau_sd));
}

double ou_p_inhom(double zeta, double tau, const OUProcess& p) {
    p.validate();
    if (!std::isfinite(zeta) || std::isnan(tau)) throw DomainError("ou_p_inhom: non-finite input");
    if (tau <= 0.0) throw DomainError("ou_p_inhom: tau must be > 0 (tau = 0 is a Dirac)");
    const double s = ou_sigma_of_tau(tau, p);
    return std::exp(-zeta * zeta / (4.0 * s * s)) / (2.0 * std::sqrt(kPi) * s);
}

double DiracGaussianMixture::continuous_density(double zeta) const {
    const double s = gaussian_std;
    return (1.0 - dirac_weight) * std::exp(-zeta * zeta / (2.0 * s * s)) / (std::sqrt(kTwoPi) * s);
}

DiracGaussianMixture jump_p_inhom(double tau, const JumpProcess& p) {
    p.validate();
    if (std::isnan(tau) || tau < 0.0) throw DomainError("jump_p_inhom: tau must be >= 0");
    return {p.survival(tau), std::sqrt(2.0) * p.sigma_inf};
}

SDTrajectory sample_trajectory(const OUProcess& p, double duration_s, double step_s,
                               std::uint64_t seed) {
    p.validate();
    if (!(duration_s > 0.0) || !std::isfinite(duration_s))
        throw DomainError("sample_trajectory: duration must be > 0");
    if (!(step_s > 0.0) || !std::isfinite(step_s))
        throw DomainError("sample_trajectory: grid step must be > 0");

    Rng rng(seed);
    LazyTrajectory lazy(p, rng);
    const auto n = static_cast<std::size_t>(std::floor(duration_s / step_s)) + 1;
    SDTrajectory out;
    out.seed = seed;
    out.times.reserve(n);
    out.omegas.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * step_s;
        out.times.push_back(t);
        out.omegas.push_back(lazy.advance_to(t));
    }
    return out;
}

SDTrajectory sample_trajectory(const JumpProcess& p, double duration_s, std::uint64_t seed) {
    p.validate();
    if (!(duration_s > 0.0) || !std::isfinite(duration_s))
        throw DomainError("sample_trajectory: duration must be > 0");

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::exponential_distribution<double> wait(1.0 / p.tau_sd);
    SDTrajectory out;
    out.seed = seed;
    double t = 0.0;
    while (t <= duration_s) {
        out.times.push_back(t);
        out.omegas.push_back(p.omega_center + p.sigma_inf * normal(rng));
        double dt = wait(rng);
        // exponential_distribution can return 0 for a saturated uniform draw
        while (dt <= 0.0) dt = wait(rng);
        t += dt;
    }
    return out;
}

LazyTrajectory::LazyTrajectory(const SDProcess& process, Rng& rng) : process_(process), rng_(&rng) {
    validate(process_);
    std::visit(
        [&](const auto& p) {
            omega_ = p.omega_center + p.sigma_inf * normal_(*rng_);
            if constexpr (std::is_same_v<std::decay_t<decltype(p)>, JumpProcess>)
                next_jump_ = p.tau_sd * exponential_(*rng_);
        },
        process_);
}

double LazyTrajectory::advance_to(double t) {
    if (t < time_) throw DomainError("LazyTrajectory::advance_to: time went backwards");
    if (const auto* ou = std::get_if<OUProcess>(&process_)) {
        const double dt = t - time_;
        if (dt > 0.0) {
            const double decay = std::exp(-dt / ou->tau_sd);
            const double spread = ou->sigma_inf * std::sqrt(-std::expm1(-2.0 * dt / ou->tau_sd));
            omega_ = ou->omega_center + (omega_ - ou->omega_center) * decay + spread * normal_(*rng_);
        }
    } else {
        const auto& jp = std::get<JumpProcess>(process_);
        while (next_jump_ <= t) {
            omega_ = jp.omega_center + jp.sigma_inf * normal_(*rng_);
            next_jump_ += jp.tau_sd * exponential_(*rng_);
            ++jumps_;
        }
    }
    time_ = t;
    return omega_;
}

}  // namespace pcfs
