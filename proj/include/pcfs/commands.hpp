#pragma once

// The four batch commands behind the pcfskit executable. Each writes its
// outputs into an existing or creatable directory and returns what it wrote;
// errors surface as the library exception types (see exit_code).

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcfs/config.hpp"
#include "pcfs/fitting.hpp"

namespace pcfs {

namespace fs = std::filesystem;

/// 0 success, 2 usage, 3 data or format, 4 numeric failure.
int exit_code(const std::exception& e);

/// Worker count: 0 means the hardware concurrency.
unsigned resolve_workers(unsigned requested);

// --- simulate ------------------------------------------------------------------

struct SimulateResult {
    Manifest manifest;
    fs::path manifest_path;
    std::vector<fs::path> files;
};

/// PCFS: one stream per (δ, polarization) plus a laser stream per δ when the
/// laser reference is on. FTS: one fringe CSV per δ. Stream k (in manifest
/// order) uses seed derive_seed(config.seed, k).
SimulateResult cmd_simulate(const RunConfig& config, const fs::path& out, unsigned workers = 0);

// --- correlate -----------------------------------------------------------------

/// One g² CSV per stream file, named g2_<stem>.csv.
std::vector<fs::path> cmd_correlate(const std::vector<fs::path>& streams, const LogBinning& binning,
                                    const fs::path& out, unsigned workers = 0);

// --- analyze -------------------------------------------------------------------

enum class AnalysisModel { Voigt, Grj, Ou };
AnalysisModel analysis_model_from_string(const std::string& s);
const char* to_string(AnalysisModel m);

struct AnalyzeOptions {
    /// g², surface, fringe or visibility CSVs (mixing PCFS and FTS inputs is
    /// an error). Orthogonal g² files are skipped.
    std::vector<fs::path> inputs;
    std::vector<fs::path> laser_refs;  ///< laser g² CSVs or directories of them
    bool laser_calibration = false;    ///< require a laser reference for every δ
    std::vector<AnalysisModel> models = {AnalysisModel::Voigt};
    SurfaceFitOptions fit = [] {
        SurfaceFitOptions o;
        o.tau_max_s = 10e-3;
        return o;
    }();
    bool inhom_only = false;  ///< OU law on inhomogeneous instead of total widths
    unsigned workers = 0;
};

struct AnalyzeResult {
    std::optional<PCFSSurface> surface;
    std::optional<FitResult> voigt, grj, ou;
    std::vector<FitResult> fts;  ///< Voigt, exponential, Gaussian
    std::string report;
    std::vector<fs::path> files;
};

AnalyzeResult cmd_analyze(const AnalyzeOptions& options, const fs::path& out);

// --- spectrum ------------------------------------------------------------------

struct SpectrumOptions {
    std::vector<double> taus_s = {1e-6, 30e-6, 1.0};
    std::vector<double> deltas_ns;  ///< contrast model grid; default 0..1.3 ns in 0.05 steps
    std::size_t grid_points = 0;    ///< 0 sizes the grid automatically
};

/// S_hom, S_inhom(τ), S_eff(τ) and the closed-form contrast C(δ, τ) for the
/// emitter described by the configuration.
std::vector<fs::path> cmd_spectrum(const RunConfig& config, const SpectrumOptions& options, const fs::path& out);

}  // namespace pcfs
