#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "pcfs/commands.hpp"
#include "pcfs/spectra.hpp"
#include "pcfs/units.hpp"

using namespace pcfs;

namespace {

constexpr double kT2 = 2.0, kTauSd = 30e-6;

struct Run {
    RunConfig config;
    AnalyzeResult analysis;
};

// 20 s per delay keeps the run short; the fringe scan still sweeps 20 cycles.
const Run& short_run() {
    static const Run run = [] {
        const fs::path dir = fs::temp_directory_path() / ("pcfs_pipeline_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        Run r;
        r.config.deltas_ns = default_deltas();
        r.config.polarizations = {Polarization::Parallel};
        r.config.duration_s = 20.0;
        r.config.scan_rate_hz = 1.0;
        r.config.seed = 5;
        r.config.binning.tau_max = 0.1;
        const auto sim = cmd_simulate(r.config, dir / "sim");
        std::vector<fs::path> streams;
        for (const auto& f : sim.files)
            if (f.extension() == ".pcfs") streams.push_back(f);
        AnalyzeOptions o;
        o.inputs = cmd_correlate(streams, r.config.binning, dir / "g2");
        o.models = {AnalysisModel::Voigt, AnalysisModel::Ou};
        r.analysis = cmd_analyze(o, dir / "analysis");
        fs::remove_all(dir);
        return r;
    }();
    return run;
}

// Long-lag T2* of the configured envelope.
double truth_t2s_inf(const RunConfig& c) {
    return t2star_from_sigma(OUProcess::from_fwhm(from_ghz(c.inhom_fwhm_ghz), c.tau_sd_s).sigma_inf);
}

}  // namespace

TEST_CASE("simulated surface agrees with the bin-averaged analytic contrast") {
    const auto& r = short_run();
    const auto& s = *r.analysis.surface;
    REQUIRE(s.tau_edges.size() == s.n_taus() + 1);
    double chi2 = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < s.n_deltas(); ++i)
        for (std::size_t j = 0; j < s.n_taus(); ++j) {
            if (s.flagged[i][j] || s.taus[j] > 10e-3 || s.deltas[i] == 0.0) continue;
            // closed form averaged uniformly over the lag bin, as the fits do
            const double lo = s.tau_edges[j], hi = s.tau_edges[j + 1];
            const auto g = [&](double t) {
                return model_pcfs_contrast(s.deltas[i], ou_voigt_params(t, kT2, truth_t2s_inf(r.config), kTauSd));
            };
            const double truth = oracle::simpson(g, lo, hi, 400) / (hi - lo);
            const double pull = (s.contrast[i][j] - truth) / s.sigma[i][j];
            chi2 += pull * pull;
            ++n;
        }
    REQUIRE(n > 50);
    CHECK(chi2 / n < 2.0);
}

TEST_CASE("short run recovers the homogeneous and diffusion parameters") {
    const auto& r = short_run();
    const auto& v = *r.analysis.voigt;
    CHECK(v.converged);
    CHECK(v.reduced_chi2() < 2.0);
    CHECK(std::abs(v.param("t2").value / kT2 - 1.0) < 0.10);
    const auto& ou = *r.analysis.ou;
    CHECK(std::abs(to_ghz(ou.param("dw_inf").value) - 1.0) < 0.15);
    CHECK(ou.param("tau_sd").value > kTauSd / 2);
    CHECK(ou.param("tau_sd").value < 2 * kTauSd);
}
