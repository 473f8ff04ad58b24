#pragma once

// Lineshape mathematics on periodic frequency grids: homogeneous and
// inhomogeneous spectra, spectral correlations p(ζ, τ), the effective
// time-dependent spectrum obtained through Wiener–Khinchin, and the closed
// form FTS / PCFS decay models.
//
// Every grid function is periodic with period `span`. Convolutions and
// correlations are circular, and Lorentzians are stored in wrapped form, so
// the DFT of a grid spectrum equals its continuous Fourier transform sampled
// at the dual delays δ_j = 2πj/span.

#include <cstddef>
#include <optional>
#include <vector>

#include "pcfs/sd_kernels.hpp"

namespace pcfs {

class FrequencyGrid {
  public:
    /// n_points: power of two, >= 256. span: total width (rad/ns).
    FrequencyGrid(std::size_t n_points, double span, double center = 0.0);

    /// Grid sized for a set of lineshapes: span = max(8·max_fwhm, 16·sigma_inf,
    /// 2π/delta_step) and enough points to put 8 samples across min_fwhm.
    static FrequencyGrid for_lineshapes(double max_fwhm, double min_fwhm, double sigma_inf = 0.0,
                                        double delta_step_ns = 0.0, double center = 0.0);

    std::size_t size() const { return n_; }
    double span() const { return span_; }
    double center() const { return center_; }
    double spacing() const { return span_ / static_cast<double>(n_); }

    /// Frequency of sample k; index n/2 sits on the center.
    double point(std::size_t k) const {
        return center_ + (static_cast<double>(k) - static_cast<double>(n_ / 2)) * spacing();
    }
    double offset(std::size_t k) const { return point(k) - center_; }

    /// Delay (ns) of DFT bin j: δ_j = 2πj/span.
    double dual_delay(std::size_t j) const;

    /// Throws ResolutionError unless span >= 8·fwhm and spacing <= fwhm/8.
    void require_resolves(double fwhm) const;

    /// Same number of points and span (centers may differ).
    bool same_shape(const FrequencyGrid& other) const;

    bool operator==(const FrequencyGrid& other) const = default;

  private:
    std::size_t n_;
    double span_;
    double center_;
};

/// Density over a frequency grid plus an optional Dirac at the grid center.
/// Total mass = Σ values·spacing + dirac_weight.
struct Spectrum {
    FrequencyGrid grid;
    std::vector<double> values;  ///< continuous part (1/(rad/ns))
    double dirac_weight = 0.0;
    std::optional<double> tau_s;  ///< delay label of an effective spectrum

    double integral() const;
};

/// Spectral correlation p(ζ, τ) on a ζ grid centered at zero, with a
/// symbolic Dirac at ζ = 0.
struct SpectralCorrelation {
    FrequencyGrid grid;
    std::vector<double> values;
    double dirac_weight = 0.0;
    double tau_s = 0.0;

    double integral() const;
};

enum class ModelKind { FtsVoigt, PcfsVoigt, PcfsLorentzianSd, PcfsGrj };

struct DecayModelParams {
    double t2 = 1.0;        ///< homogeneous coherence time (ns)
    double t2_star = 1.0;   ///< inhomogeneous coherence time (ns), T2*(τ) where relevant
    double a_weight = 1.0;  ///< homogeneous weight of the jump model
    ModelKind model_kind = ModelKind::PcfsVoigt;

    void validate() const;
};

// --- lineshapes -----------------------------------------------------------

/// Normalized Lorentzian of FWHM 2/t2 centered on the grid center.
Spectrum lorentzian_hom(double t2_ns, const FrequencyGrid& grid);

/// Normalized Gaussian of std sigma centered on the grid center.
Spectrum gaussian_spectrum(double sigma, const FrequencyGrid& grid);

/// Voigt profile: Lorentzian of FWHM 2/t2 convolved with a Gaussian of std sigma.
Spectrum voigt_spectrum(double t2_ns, double sigma, const FrequencyGrid& grid);

/// Full width at half maximum of the continuous part, with cubic
/// interpolation between samples. Throws DomainError for Dirac mixtures.
double fwhm(const Spectrum& s);

// --- correlations ---------------------------------------------------------

/// (s ⋆ s)(ζ) = ∫ s(ω) s(ω + ζ) dω, Dirac part carried symbolically.
SpectralCorrelation autocorrelation(const Spectrum& s, double tau_s = 0.0);

/// OU p_inhom(ζ, τ) sampled on the ζ grid of `grid` (τ > 0).
SpectralCorrelation ou_p_inhom_on_grid(double tau_s, const OUProcess& p, const FrequencyGrid& grid);

/// Mixture with its continuous Gaussian sampled on the ζ grid of `grid`.
SpectralCorrelation mixture_on_grid(const DiracGaussianMixture& m, double tau_s,
                                    const FrequencyGrid& grid);

/// p(ζ, τ) = (p_hom * p_inhom)(ζ). Dirac components convolve symbolically.
SpectralCorrelation spectral_correlation(const SpectralCorrelation& p_hom,
                                         const SpectralCorrelation& p_inhom, double tau_s);

/// Effective inhomogeneous envelope S_inhom(ω, τ) = FT⁻¹[ sqrt(FT[p_inhom]) ],
/// centered at omega_center. A Dirac of weight w in p_inhom becomes a Dirac of
/// weight sqrt(w). Throws NotAutocorrelationError when FT[p_inhom] dips below
/// −1e−9.
Spectrum effective_inhom_spectrum(const SpectralCorrelation& p_inhom, double omega_center = 0.0);

/// S_eff = S_hom * S_inhom on a common grid. S_hom is read as a kernel relative
/// to its grid center; the result sits on the grid of s_inhom.
Spectrum effective_spectrum(const Spectrum& s_hom, const Spectrum& s_inhom);

/// Complex Fourier transform of a spectrum at the dual delays δ_j, j = 0..n/2,
/// as magnitudes |S̃(δ_j)|.
std::vector<double> fourier_magnitude(const Spectrum& s);

// --- closed-form decay models -------------------------------------------

/// FTS visibility exp(−δ/T2)·exp(−(δ/T2*)²).
double model_fts_visibility(double delta_ns, double t2_ns, double t2_star_ns);

/// PCFS contrast for the selected decay law (FtsVoigt is rejected).
double model_pcfs_contrast(double delta_ns, const DecayModelParams& params);

/// T2*(τ) = T2*∞ / sqrt(1 − e^(−τ/τ_SD)).
double ou_t2star_of_tau(double tau_s, double t2star_inf_ns, double tau_sd_s);

/// Model parameters of the OU Voigt decay at delay τ.
DecayModelParams ou_voigt_params(double tau_s, double t2_ns, double t2star_inf_ns, double tau_sd_s);

/// Model parameters of the jump-model decay at delay τ, a(τ) = e^(−τ/τ_SD).
DecayModelParams jump_params(double tau_s, double t2_ns, double t2star_ns, double tau_sd_s);

/// T2* of a Gaussian envelope of std sigma (rad/ns): T2* = √2/σ.
double t2star_from_sigma(double sigma);
double sigma_from_t2star(double t2_star_ns);

// --- linewidths -------------------------------------------------------------

enum class LinewidthConvention {
    Fts,   ///< Δω_inhom = 4·sqrt(ln 2)/T2*
    Pcfs,  ///< Δω_inhom = 4·sqrt(2)/T2*(τ)
};

struct Linewidths {
    double hom_fwhm = 0.0;    ///< rad/ns
    double inhom_fwhm = 0.0;  ///< rad/ns, convention dependent
    double total_fwhm = 0.0;  ///< rad/ns, numeric FWHM of the Voigt profile

    double hom_ghz() const;
    double inhom_ghz() const;
    double total_ghz() const;
};

/// Homogeneous width 2/T2 and inhomogeneous width per the chosen convention.
/// The total width is the numeric FWHM of the actual profile: a Lorentzian of
/// HWHM 1/T2 convolved with the Gaussian of std √2/T2*. t2 = +inf is allowed.
Linewidths linewidths_from_times(double t2_ns, double t2_star_ns, LinewidthConvention convention);

// --- Voigt profile ------------------------------------------------------

/// Normalized Voigt profile at offset x for Lorentzian HWHM gamma and
/// Gaussian std sigma, evaluated as a convolution integral.
double voigt_profile(double x, double gamma, double sigma);

/// Numeric FWHM of the Voigt profile (root of V(x) = V(0)/2).
double voigt_fwhm(double lorentz_fwhm, double gauss_sigma);

}  // namespace pcfs
