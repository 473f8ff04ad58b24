#pragma once

// Weighted nonlinear least squares (Levenberg–Marquardt on Eigen) with
// shared and per-dataset parameters, plus the FTS, PCFS Voigt, jump-mixture
// and OU linewidth fits built on it.

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "pcfs/correlator.hpp"

namespace pcfs {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// A fitted quantity. Bounds are enforced through a change of variables:
/// log_scale maps x = e^s first, then finite bounds (taken in s) use a sine
/// map and one-sided bounds a hyperbolic one. Fixed parameters keep their
/// initial value and are excluded from the covariance.
struct ParamSpec {
    std::string name;
    double initial = 1.0;
    double lower = -kInf;
    double upper = kInf;
    bool log_scale = false;
    bool fixed = false;
};

/// One curve. x_lo/x_hi optionally give the bin over which each point was
/// averaged (used by the lag-domain models); tau_s labels a PCFS slice.
struct Dataset {
    std::vector<double> x, y, sigma;
    std::vector<double> x_lo, x_hi;
    double tau_s = std::numeric_limits<double>::quiet_NaN();
    double tau_lo = std::numeric_limits<double>::quiet_NaN();
    double tau_hi = std::numeric_limits<double>::quiet_NaN();

    std::size_t size() const { return x.size(); }
};

/// Built-in model families. Parameter layouts (shared | per dataset):
///   FtsVoigt  V = e^(−δ/T2)·e^(−(δ/T2*)²)              t2, t2_star |
///   FtsExp    V = e^(−δ/T2)                             t2 |
///   FtsGauss  V = e^(−(δ/T2*)²)                         t2_star |
///   PcfsVoigt C = e^(−2δ/T2)·e^(−2δ²/T2*²)              t2 | t2_star
///   PcfsGrj   C = e^(−2δ/T2)·(a + (1−a)e^(−2δ²/T2*²))   t2, t2_star | a
///   OuTotalLinewidth  numeric Voigt FWHM of the 2/T2 Lorentzian and the
///             Gaussian of FWHM Δω∞·sqrt(1 − ⟨e^(−τ/τSD)⟩)  dw_inf, tau_sd, t2 |
///   OuInhomLinewidth  Δω∞·sqrt(1 − ⟨e^(−τ/τSD)⟩)       dw_inf, tau_sd |
///   ExpDecay  a = ⟨e^(−τ/τSD)⟩                          tau_sd |
/// ⟨·⟩ is the uniform average over [x_lo, x_hi] when bins are given.
enum class FitModel { FtsVoigt, FtsExp, FtsGauss, PcfsVoigt, PcfsGrj, OuTotalLinewidth, OuInhomLinewidth, ExpDecay, Custom };

const char* to_string(FitModel m);

/// Model value at x for dataset d. When grad is non-empty it receives
/// ∂value/∂(shared..., local...) in external parameters.
using ModelFunction = std::function<double(double x, std::span<const double> shared, std::span<const double> local,
                                           const Dataset& d, std::size_t point, std::span<double> grad)>;

struct FitProblem {
    FitModel model = FitModel::Custom;
    ModelFunction custom;            ///< used when model == Custom
    bool custom_gradient = false;    ///< false: central differences
    std::vector<Dataset> datasets;
    std::vector<ParamSpec> shared;
    std::vector<ParamSpec> per_dataset;                     ///< template for every dataset
    std::vector<std::vector<double>> per_dataset_initial;   ///< optional [dataset][param]
    double sigma_floor = 1e-3;
    int max_iterations = 500;

    /// Throws DomainError on inconsistent layouts, initials outside bounds,
    /// non-positive σ or dof <= 0.
    void validate() const;
};

struct ParamEstimate {
    std::string name;
    double value = 0.0;
    double sigma = 0.0;
    bool fixed = false;
    bool at_bound = false;
};

/// Linewidths per PCFS slice (rad/ns). inhom_pcfs = 4√2/T2*(τ); the total is
/// the numeric FWHM of the physical Voigt (Gaussian std √2/T2*).
struct LinewidthRow {
    double tau_s = 0.0;
    double tau_lo = 0.0, tau_hi = 0.0;
    double inhom_pcfs = 0.0, inhom_pcfs_sigma = 0.0;
    double inhom_fts = 0.0, inhom_fts_sigma = 0.0;
    double total = 0.0, total_sigma = 0.0;
};

struct FitResult {
    std::string model;
    std::vector<ParamEstimate> shared;
    std::vector<std::vector<ParamEstimate>> per_dataset;
    std::vector<double> dataset_tau;      ///< slice labels (NaN when unused)
    Eigen::MatrixXd covariance;           ///< free external parameters, shared first
    std::vector<std::vector<double>> residuals;  ///< (y − model)/σ per dataset
    double chi2 = 0.0;
    int dof = 0;
    double aic = 0.0;                     ///< χ² + 2k
    bool converged = false;
    int n_iterations = 0;
    std::vector<std::string> notices;

    // filled by the specialised fits
    std::vector<LinewidthRow> linewidths;
    std::optional<ParamEstimate> tau_sd;       ///< GRJ: inverse fit of a(τ)
    std::optional<double> inflection_tau_s;    ///< Voigt: steepest Δω rise; GRJ: a(τ) inflection
    bool tau_sd_unidentifiable = false;

    double reduced_chi2() const { return dof > 0 ? chi2 / dof : kInf; }
    /// Shared parameter by name; throws DomainError when absent.
    const ParamEstimate& param(std::string_view name) const;
    /// Per-dataset parameter column.
    std::vector<double> column(std::string_view name) const;
    std::vector<double> column_sigma(std::string_view name) const;
};

/// Levenberg–Marquardt with Marquardt scaling in the transformed variables.
/// Converged when an accepted step changes χ² by less than 1e−10 relative or
/// the step norm drops below 1e−12; hitting max_iterations returns
/// converged = false with a notice. Throws DegenerateModelError when the
/// Jacobian at the start is rank deficient. Uncertainties come from
/// (JᵀWJ)⁻¹ in external parameters, without χ²/dof rescaling.
FitResult fit_least_squares(const FitProblem& problem);

/// Model value for a built-in family (shared then local parameters). A
/// non-empty grad receives the gradient in the same order.
double evaluate_model(FitModel model, double x, std::span<const double> shared, std::span<const double> local,
                      const Dataset& d = {}, std::size_t point = 0, std::span<double> grad = {});

/// PCFS Voigt model whose T2*(τ) is given by its values at node_taus,
/// interpolated linearly in (ln τ, ln 2/T2*²) and extrapolated from the
/// nearest segment. Each dataset (identified by tau_s) is averaged uniformly
/// over [tau_lo, tau_hi]. Shared layout: t2, t2_star_0 … t2_star_{n−1}.
ModelFunction pcfs_voigt_binned_model(std::vector<double> node_taus);

// --- FTS ------------------------------------------------------------------

enum class FtsModel { Voigt, Exp, Gauss };

struct VisibilityCurve {
    std::vector<double> deltas;  ///< ns
    std::vector<double> visibility;
    std::vector<double> sigma;
};

VisibilityCurve visibility_curve(const std::vector<VisibilityEstimate>& points);

/// Fits the FTS decay. Time constants live in [1e−3, 1e9] ns. The Voigt fit
/// also starts from the exponential and Gaussian optima and keeps the best
/// χ², so it never does worse than either comparator.
FitResult fit_fts(const VisibilityCurve& v, FtsModel model, double sigma_floor = 1e-3);

// --- PCFS -----------------------------------------------------------------

struct SurfaceFitOptions {
    double tau_min_s = 0.0;
    double tau_max_s = kInf;    ///< slices above this lag are left out
    std::size_t min_points = 4; ///< valid δ points needed to keep a slice
    double sigma_floor = 1e-3;
    /// Voigt fit only: average the model over each lag bin (needs bin
    /// edges); T2*(τ) values then refer to the slice centers.
    bool bin_average = true;
};

/// Shared T2, one T2*(τ) per slice. Initialization: T2 from a log-quadratic
/// fit of the largest-τ slice, T2*(τ) from the δ² moment of each slice.
/// Fills linewidths and the τ of the steepest rise of Δω_inhom.
FitResult fit_pcfs_voigt_global(const PCFSSurface& surface, const SurfaceFitOptions& options = {});

/// Shared T2 and T2*, one a(τ) ∈ [0, 1] per slice. Also fits
/// a(τ) = ⟨e^(−τ/τSD)⟩ over the lag bins; the inflection of a versus ln τ is
/// that of the fitted law (τ = τSD), the coarse bin-to-bin estimate goes to
/// the notices.
FitResult fit_pcfs_grj_global(const PCFSSurface& surface, const SurfaceFitOptions& options = {});

// --- linewidth evolution ---------------------------------------------------

struct LinewidthSeries {
    std::vector<double> taus;       ///< s
    std::vector<double> linewidth;  ///< rad/ns
    std::vector<double> sigma;
    std::vector<double> tau_lo, tau_hi;  ///< optional bin edges
};

LinewidthSeries linewidth_series(const FitResult& voigt_fit, bool inhom_only = false);

/// Free Δω∞ (physical FWHM of the long-time Gaussian, rad/ns) and τSD with
/// T2 fixed. inhom_only fits Δω∞·sqrt(1 − e^(−τ/τSD)) to inhomogeneous
/// widths instead of the total. Sets tau_sd_unidentifiable when τSD leaves
/// the sampled lag range or its log-uncertainty exceeds 1.
FitResult fit_ou_linewidth(const LinewidthSeries& series, double t2_ns, bool inhom_only = false,
                           double sigma_floor = 0.0);

// --- reporting --------------------------------------------------------------

/// Deterministic plain-text report: parameters, uncertainties, χ²/dof, AIC
/// and any tables.
std::string format_report(const FitResult& r);

/// AIC(b) − AIC(a): positive favours a.
double aic_difference(const FitResult& a, const FitResult& b);

}  // namespace pcfs
