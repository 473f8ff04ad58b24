#include "pcfs/spectra.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "fft.hpp"
#include "pcfs/errors.hpp"
#include "pcfs/units.hpp"

namespace pcfs {

using detail::dft;
using detail::fftshift;
using detail::idft;
using detail::ifftshift;
using cvec = std::vector<std::complex<double>>;

// --- FrequencyGrid ------------------------------------------------------------

FrequencyGrid::FrequencyGrid(std::size_t n_points, double span, double center)
    : n_(n_points), span_(span), center_(center) {
    if (n_points < 256 || !std::has_single_bit(n_points))
        throw DomainError("FrequencyGrid: n_points must be a power of two >= 256");
    if (!std::isfinite(span) || span <= 0.0) throw DomainError("FrequencyGrid: span must be > 0");
    if (!std::isfinite(center)) throw DomainError("FrequencyGrid: non-finite center");
}

FrequencyGrid FrequencyGrid::for_lineshapes(double max_fwhm, double min_fwhm, double sigma_inf,
                                            double delta_step_ns, double center) {
    if (!(max_fwhm > 0.0) || !(min_fwhm > 0.0) || min_fwhm > max_fwhm)
        throw DomainError("FrequencyGrid::for_lineshapes: need 0 < min_fwhm <= max_fwhm");
    double span = std::max(8.0 * max_fwhm, 16.0 * sigma_inf);
    if (delta_step_ns > 0.0) span = std::max(span, kTwoPi / delta_step_ns);
    const double needed = span / (min_fwhm / 8.0);
    std::size_t n = 256;
    while (static_cast<double>(n) < needed) {
        n *= 2;
        if (n > (std::size_t{1} << 24))
            throw ResolutionError("FrequencyGrid::for_lineshapes: more than 2^24 points required");
    }
    return FrequencyGrid(n, span, center);
}

double FrequencyGrid::dual_delay(std::size_t j) const {
    return kTwoPi * static_cast<double>(j) / span_;
}

void FrequencyGrid::require_resolves(double fwhm) const {
    if (span_ < 8.0 * fwhm)
        throw ResolutionError("frequency grid span " + std::to_string(span_) +
                              " rad/ns is narrower than 8 x FWHM " + std::to_string(fwhm));
    if (spacing() > fwhm / 8.0)
        throw ResolutionError("frequency grid spacing " + std::to_string(spacing()) +
                              " rad/ns under-resolves FWHM " + std::to_string(fwhm));
}

bool FrequencyGrid::same_shape(const FrequencyGrid& other) const {
    return n_ == other.n_ && span_ == other.span_;
}

// --- helpers ------------------------------------------------------------------------

namespace {

double grid_sum(const std::vector<double>& v, double spacing) {
    double s = 0.0;
    for (double x : v) s += x;
    return s * spacing;
}

void rescale_to(std::vector<double>& v, double spacing, double mass) {
    const double current = grid_sum(v, spacing);
    if (current <= 0.0) return;
    const double f = mass / current;
    for (auto& x : v) x *= f;
}

// Clamps negative samples and restores `mass`, unless the negative part is
// at roundoff level. The square root in the Wiener–Khinchin step turns FFT
// roundoff into ripples holding ~1e-7 of the mass; clamping those would shift
// every Fourier coefficient by about as much.
void clear_negative_lobes(std::vector<double>& v, double spacing, double mass) {
    double negative = 0.0;
    for (double x : v) negative += std::min(x, 0.0);
    if (-negative * spacing <= 1e-6 * std::abs(mass)) return;
    for (auto& x : v) x = std::max(x, 0.0);
    rescale_to(v, spacing, mass);
}

// Periodic sum of a Lorentzian of HWHM gamma over images spaced by `period`.
double wrapped_lorentzian(double u, double gamma, double period) {
    const double a = kTwoPi * gamma / period;
    const double b = kTwoPi * u / period;
    const double sh = std::sinh(0.5 * a), sn = std::sin(0.5 * b);
    // cosh(a) - cos(b) written without cancellation
    return std::sinh(a) / (period * 2.0 * (sh * sh + sn * sn));
}

double wrapped_gaussian(double u, double sigma, double period) {
    const int images = static_cast<int>(std::ceil(10.0 * sigma / period)) + 1;
    double s = 0.0;
    for (int m = -images; m <= images; ++m) {
        const double x = (u + m * period) / sigma;
        s += std::exp(-0.5 * x * x);
    }
    return s / (std::sqrt(kTwoPi) * sigma);
}

// Unshifted DFT of a centered grid function times the grid spacing: samples
// of its continuous Fourier transform at the dual delays.
cvec transform_centered(const std::vector<double>& values, double spacing) {
    auto x = ifftshift<double>(values);
    auto f = dft(x);
    for (auto& v : f) v *= spacing;
    return f;
}

std::vector<double> inverse_to_centered(const cvec& f, double spacing) {
    auto x = idft(f);
    std::vector<double> re(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) re[k] = x[k].real() / spacing;
    return fftshift<double>(re);
}

// Circular convolution of two centered grid functions.
std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b,
                             double spacing) {
    auto fa = transform_centered(a, spacing);
    auto fb = transform_centered(b, spacing);
    for (std::size_t j = 0; j < fa.size(); ++j) fa[j] *= fb[j];
    return inverse_to_centered(fa, spacing);
}

// Fractional index in [i, i+1] where the four-point cubic through samples
// i−1..i+2 crosses `level` (v[i] and v[i+1] bracket it).
double half_crossing(const std::vector<double>& v, std::size_t i, double level) {
    const std::size_t n = v.size();
    const std::size_t i0 = i > 0 ? i - 1 : 0;
    const std::size_t i3 = std::min(i + 2, n - 1);
    auto cubic = [&](double x) {
        double sum = 0.0;
        for (std::size_t a = i0; a <= i3; ++a) {
            double w = 1.0;
            for (std::size_t b = i0; b <= i3; ++b)
                if (b != a) w *= (x - static_cast<double>(b)) / (static_cast<double>(a) - static_cast<double>(b));
            sum += w * v[a];
        }
        return sum - level;
    };
    double lo = static_cast<double>(i), hi = lo + 1.0;
    const bool rising = cubic(lo) < 0.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((cubic(mid) < 0.0) == rising)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

void require_density(const std::vector<double>& values, const FrequencyGrid& grid,
                     const char* what) {
    if (values.size() != grid.size())
        throw DomainError(std::string(what) + ": value count does not match the grid");
}

}  // namespace

double Spectrum::integral() const { return grid_sum(values, grid.spacing()) + dirac_weight; }

double SpectralCorrelation::integral() const {
    return grid_sum(values, grid.spacing()) + dirac_weight;
}

void DecayModelParams::validate() const {
    if (std::isnan(t2) || std::isnan(t2_star) || std::isnan(a_weight))
        throw DomainError("DecayModelParams: NaN parameter");
    if (t2 <= 0.0) throw DomainError("DecayModelParams: t2 must be > 0");
    if (t2_star <= 0.0) throw DomainError("DecayModelParams: t2_star must be > 0");
    if (a_weight < 0.0 || a_weight > 1.0)
        throw DomainError("DecayModelParams: a_weight must lie in [0, 1]");
}

// --- lineshapes -------------------------------------------------------------

Spectrum lorentzian_hom(double t2_ns, const FrequencyGrid& grid) {
    if (!std::isfinite(t2_ns) || t2_ns <= 0.0)
        throw DomainError("lorentzian_hom: t2 must be finite and > 0");
    const double gamma = 1.0 / t2_ns;
    grid.require_resolves(2.0 * gamma);
    Spectrum s{grid, std::vector<double>(grid.size()), 0.0, std::nullopt};
    for (std::size_t k = 0; k < grid.size(); ++k)
        s.values[k] = wrapped_lorentzian(grid.offset(k), gamma, grid.span());
    rescale_to(s.values, grid.spacing(), 1.0);
    return s;
}

Spectrum gaussian_spectrum(double sigma, const FrequencyGrid& grid) {
    if (!std::isfinite(sigma) || sigma <= 0.0)
        throw DomainError("gaussian_spectrum: sigma must be finite and > 0");
    grid.require_resolves(kGaussFwhmPerSigma * sigma);
    Spectrum s{grid, std::vector<double>(grid.size()), 0.0, std::nullopt};
    for (std::size_t k = 0; k < grid.size(); ++k)
        s.values[k] = wrapped_gaussian(grid.offset(k), sigma, grid.span());
    rescale_to(s.values, grid.spacing(), 1.0);
    return s;
}

Spectrum voigt_spectrum(double t2_ns, double sigma, const FrequencyGrid& grid) {
    return effective_spectrum(lorentzian_hom(t2_ns, grid), gaussian_spectrum(sigma, grid));
}

double fwhm(const Spectrum& s) {
    if (s.dirac_weight > 0.0) throw DomainError("fwhm: spectrum carries a Dirac component");
    const auto& v = s.values;
    const auto peak_it = std::max_element(v.begin(), v.end());
    const auto ipk = static_cast<std::size_t>(peak_it - v.begin());
    const double half = 0.5 * *peak_it;
    if (!(half > 0.0)) throw DomainError("fwhm: empty spectrum");

    std::size_t r = ipk;
    while (r + 1 < v.size() && v[r + 1] >= half) ++r;
    if (r + 1 >= v.size()) throw ResolutionError("fwhm: half maximum not reached inside the grid");
    std::size_t l = ipk;
    while (l > 0 && v[l - 1] >= half) --l;
    if (l == 0) throw ResolutionError("fwhm: half maximum not reached inside the grid");

    const double h = s.grid.spacing();
    const double right = half_crossing(v, r, half);
    const double left = half_crossing(v, l - 1, half);
    return (right - left) * h;
}

// --- correlations -------------------------------------------------------------

SpectralCorrelation autocorrelation(const Spectrum& s, double tau_s) {
    require_density(s.values, s.grid, "autocorrelation");
    const double h = s.grid.spacing();
    const std::size_t n = s.grid.size();
    auto f = transform_centered(s.values, h);
    for (auto& v : f) v = std::norm(v);
    SpectralCorrelation out{FrequencyGrid(n, s.grid.span(), 0.0), inverse_to_centered(f, h),
                            s.dirac_weight * s.dirac_weight, tau_s};
    if (s.dirac_weight > 0.0) {
        // w·(c(ζ) + c(−ζ)) from the two cross terms
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t mirror = (n - k) % n;
            out.values[k] += s.dirac_weight * (s.values[k] + s.values[mirror]);
        }
    }
    return out;
}

SpectralCorrelation ou_p_inhom_on_grid(double tau_s, const OUProcess& p, const FrequencyGrid& grid) {
    p.validate();
    if (!(tau_s > 0.0)) throw DomainError("ou_p_inhom_on_grid: tau must be > 0");
    const double std_zeta = std::sqrt(2.0) * ou_sigma_of_tau(tau_s, p);
    FrequencyGrid zgrid(grid.size(), grid.span(), 0.0);
    if (zgrid.spacing() > kGaussFwhmPerSigma * std_zeta / 8.0)
        throw ResolutionError("ou_p_inhom_on_grid: grid under-resolves p_inhom");
    SpectralCorrelation out{zgrid, std::vector<double>(grid.size()), 0.0, tau_s};
    for (std::size_t k = 0; k < zgrid.size(); ++k)
        out.values[k] = wrapped_gaussian(zgrid.point(k), std_zeta, zgrid.span());
    return out;
}

SpectralCorrelation mixture_on_grid(const DiracGaussianMixture& m, double tau_s,
                                    const FrequencyGrid& grid) {
    if (m.dirac_weight < 0.0 || m.dirac_weight > 1.0 || !(m.gaussian_std > 0.0))
        throw DomainError("mixture_on_grid: invalid mixture");
    FrequencyGrid zgrid(grid.size(), grid.span(), 0.0);
    SpectralCorrelation out{zgrid, std::vector<double>(grid.size(), 0.0), m.dirac_weight, tau_s};
    if (m.dirac_weight < 1.0) {
        if (zgrid.spacing() > kGaussFwhmPerSigma * m.gaussian_std / 8.0)
            throw ResolutionError("mixture_on_grid: grid under-resolves the Gaussian part");
        for (std::size_t k = 0; k < zgrid.size(); ++k)
            out.values[k] = (1.0 - m.dirac_weight) *
                            wrapped_gaussian(zgrid.point(k), m.gaussian_std, zgrid.span());
    }
    return out;
}

SpectralCorrelation spectral_correlation(const SpectralCorrelation& p_hom,
                                         const SpectralCorrelation& p_inhom, double tau_s) {
    if (!p_hom.grid.same_shape(p_inhom.grid))
        throw DomainError("spectral_correlation: grid mismatch");
    require_density(p_hom.values, p_hom.grid, "spectral_correlation");
    require_density(p_inhom.values, p_inhom.grid, "spectral_correlation");
    const double h = p_hom.grid.spacing();
    SpectralCorrelation out{p_hom.grid, convolve(p_hom.values, p_inhom.values, h),
                            p_hom.dirac_weight * p_inhom.dirac_weight, tau_s};
    for (std::size_t k = 0; k < out.values.size(); ++k)
        out.values[k] += p_hom.dirac_weight * p_inhom.values[k] +
                         p_inhom.dirac_weight * p_hom.values[k];
    return out;
}

Spectrum effective_inhom_spectrum(const SpectralCorrelation& p_inhom, double omega_center) {
    require_density(p_inhom.values, p_inhom.grid, "effective_inhom_spectrum");
    if (p_inhom.dirac_weight < 0.0) throw DomainError("effective_inhom_spectrum: negative Dirac weight");
    const double h = p_inhom.grid.spacing();
    auto f = transform_centered(p_inhom.values, h);

    constexpr double kNegativeTolerance = -1e-9;
    const double dirac_out = std::sqrt(p_inhom.dirac_weight);
    cvec root(f.size());
    for (std::size_t j = 0; j < f.size(); ++j) {
        double re = f[j].real() + p_inhom.dirac_weight;
        if (re < kNegativeTolerance)
            throw NotAutocorrelationError(
                "effective_inhom_spectrum: Fourier transform of p_inhom is negative (" +
                std::to_string(re) + ") at delay index " + std::to_string(j));
        re = std::max(re, 0.0);
        root[j] = std::sqrt(re) - dirac_out;
    }

    Spectrum s{FrequencyGrid(p_inhom.grid.size(), p_inhom.grid.span(), omega_center),
               inverse_to_centered(root, h), dirac_out, p_inhom.tau_s};
    const double total = std::sqrt(std::max(p_inhom.integral(), 0.0));
    if (total - dirac_out > 0.0)
        clear_negative_lobes(s.values, h, total - dirac_out);
    else
        std::fill(s.values.begin(), s.values.end(), 0.0);
    return s;
}

Spectrum effective_spectrum(const Spectrum& s_hom, const Spectrum& s_inhom) {
    if (!s_hom.grid.same_shape(s_inhom.grid))
        throw DomainError("effective_spectrum: grid mismatch");
    require_density(s_hom.values, s_hom.grid, "effective_spectrum");
    require_density(s_inhom.values, s_inhom.grid, "effective_spectrum");
    const double h = s_inhom.grid.spacing();
    Spectrum out{s_inhom.grid, convolve(s_hom.values, s_inhom.values, h),
                 s_hom.dirac_weight * s_inhom.dirac_weight, s_inhom.tau_s};
    for (std::size_t k = 0; k < out.values.size(); ++k)
        out.values[k] += s_inhom.dirac_weight * s_hom.values[k] + s_hom.dirac_weight * s_inhom.values[k];
    const double mass = s_hom.integral() * s_inhom.integral() - out.dirac_weight;
    clear_negative_lobes(out.values, h, mass);
    return out;
}

std::vector<double> fourier_magnitude(const Spectrum& s) {
    require_density(s.values, s.grid, "fourier_magnitude");
    auto f = transform_centered(s.values, s.grid.spacing());
    std::vector<double> mag(s.grid.size() / 2 + 1);
    for (std::size_t j = 0; j < mag.size(); ++j) mag[j] = std::abs(f[j] + s.dirac_weight);
    return mag;
}

// --- models ---------------------------------------------------------------

double model_fts_visibility(double delta_ns, double t2_ns, double t2_star_ns) {
    if (std::isnan(delta_ns) || delta_ns < 0.0) throw DomainError("model_fts_visibility: delta must be >= 0");
    if (!(t2_ns > 0.0) || !(t2_star_ns > 0.0))
        throw DomainError("model_fts_visibility: coherence times must be > 0");
    const double g = delta_ns / t2_star_ns;
    return std::exp(-delta_ns / t2_ns) * std::exp(-g * g);
}

double model_pcfs_contrast(double delta_ns, const DecayModelParams& params) {
    if (std::isnan(delta_ns) || delta_ns < 0.0) throw DomainError("model_pcfs_contrast: delta must be >= 0");
    params.validate();
    const double hom = std::exp(-delta_ns / (0.5 * params.t2));
    const double g = delta_ns / (params.t2_star / std::sqrt(2.0));
    switch (params.model_kind) {
        case ModelKind::PcfsVoigt:
            return hom * std::exp(-g * g);
        case ModelKind::PcfsGrj:
            return params.a_weight * hom + (1.0 - params.a_weight) * hom * std::exp(-g * g);
        case ModelKind::PcfsLorentzianSd:
            return std::exp(-delta_ns / (0.5 * params.t2 + 0.5 * params.t2_star));
        case ModelKind::FtsVoigt:
            throw DomainError("model_pcfs_contrast: FtsVoigt is not a PCFS contrast model");
    }
    throw DomainError("model_pcfs_contrast: unknown model kind");
}

double ou_t2star_of_tau(double tau_s, double t2star_inf_ns, double tau_sd_s) {
    if (std::isnan(tau_s) || tau_s <= 0.0) throw DomainError("ou_t2star_of_tau: tau must be > 0");
    if (!(t2star_inf_ns > 0.0) || !(tau_sd_s > 0.0))
        throw DomainError("ou_t2star_of_tau: t2star_inf and tau_sd must be > 0");
    return t2star_inf_ns / std::sqrt(-std::expm1(-tau_s / tau_sd_s));
}

DecayModelParams ou_voigt_params(double tau_s, double t2_ns, double t2star_inf_ns, double tau_sd_s) {
    return {t2_ns, ou_t2star_of_tau(tau_s, t2star_inf_ns, tau_sd_s), 1.0, ModelKind::PcfsVoigt};
}

DecayModelParams jump_params(double tau_s, double t2_ns, double t2star_ns, double tau_sd_s) {
    if (std::isnan(tau_s) || tau_s < 0.0) throw DomainError("jump_params: tau must be >= 0");
    if (!(tau_sd_s > 0.0)) throw DomainError("jump_params: tau_sd must be > 0");
    return {t2_ns, t2star_ns, std::exp(-tau_s / tau_sd_s), ModelKind::PcfsGrj};
}

double t2star_from_sigma(double sigma) {
    if (!(sigma > 0.0)) throw DomainError("t2star_from_sigma: sigma must be > 0");
    return std::sqrt(2.0) / sigma;
}

double sigma_from_t2star(double t2_star_ns) {
    if (!(t2_star_ns > 0.0)) throw DomainError("sigma_from_t2star: T2* must be > 0");
    return std::sqrt(2.0) / t2_star_ns;
}

// --- linewidths -------------------------------------------------------------------

double Linewidths::hom_ghz() const { return to_ghz(hom_fwhm); }
double Linewidths::inhom_ghz() const { return to_ghz(inhom_fwhm); }
double Linewidths::total_ghz() const { return to_ghz(total_fwhm); }

Linewidths linewidths_from_times(double t2_ns, double t2_star_ns, LinewidthConvention convention) {
    if (!(t2_ns > 0.0) || !(t2_star_ns > 0.0))
        throw DomainError("linewidths_from_times: coherence times must be > 0");
    Linewidths lw;
    lw.hom_fwhm = std::isinf(t2_ns) ? 0.0 : 2.0 / t2_ns;
    if (!std::isinf(t2_star_ns)) {
        const double factor = convention == LinewidthConvention::Fts ? 4.0 * std::sqrt(kLn2)
                                                                     : 4.0 * std::sqrt(2.0);
        lw.inhom_fwhm = factor / t2_star_ns;
    }
    const double sigma = std::isinf(t2_star_ns) ? 0.0 : std::sqrt(2.0) / t2_star_ns;
    lw.total_fwhm = voigt_fwhm(lw.hom_fwhm, sigma);
    return lw;
}

// --- Voigt --------------------------------------------------------------------------

double voigt_profile(double x, double gamma, double sigma) {
    if (!(gamma >= 0.0) || !(sigma >= 0.0) || (gamma == 0.0 && sigma == 0.0))
        throw DomainError("voigt_profile: need gamma >= 0, sigma >= 0, not both zero");
    if (sigma == 0.0) return gamma / (kPi * (x * x + gamma * gamma));
    if (gamma == 0.0) return std::exp(-0.5 * x * x / (sigma * sigma)) / (std::sqrt(kTwoPi) * sigma);
    // V(x) = ∫ φ(u)·L(x − σu) du with φ the unit normal density; split at the
    // Lorentzian peak u = x/σ so narrow Lorentzians are resolved
    auto integrand = [&](double u) {
        const double y = x - sigma * u;
        return std::exp(-0.5 * u * u) * gamma / (y * y + gamma * gamma);
    };
    constexpr double kCut = 12.0;
    const double split = std::clamp(x / sigma, -kCut, kCut);
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    double value = 0.0;
    if (split > -kCut) value += GK::integrate(integrand, -kCut, split, 15, 1e-12);
    if (split < kCut) value += GK::integrate(integrand, split, kCut, 15, 1e-12);
    return value / (kPi * std::sqrt(kTwoPi));
}

double voigt_fwhm(double lorentz_fwhm, double gauss_sigma) {
    if (!(lorentz_fwhm >= 0.0) || !(gauss_sigma >= 0.0))
        throw DomainError("voigt_fwhm: widths must be >= 0");
    if (gauss_sigma == 0.0) return lorentz_fwhm;
    if (lorentz_fwhm == 0.0) return kGaussFwhmPerSigma * gauss_sigma;
    const double gamma = 0.5 * lorentz_fwhm;
    const double peak = voigt_profile(0.0, gamma, gauss_sigma);
    auto f = [&](double x) { return voigt_profile(x, gamma, gauss_sigma) - 0.5 * peak; };
    // the Voigt half width never exceeds the sum of the component half widths
    const double hi = 1.01 * (gamma + 0.5 * kGaussFwhmPerSigma * gauss_sigma);
    std::uintmax_t max_iter = 200;
    const auto [a, b] = boost::math::tools::toms748_solve(
        f, 0.0, hi, boost::math::tools::eps_tolerance<double>(48), max_iter);
    return a + b;  // twice the midpoint of the bracket
}

}  // namespace pcfs
