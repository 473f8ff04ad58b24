#pragma once

// Run configuration (INI: key = value under [section] headers) and the JSON
// manifest written next to simulated data. The manifest embeds the full
// configuration, so it can stand in for the INI file to reproduce a run.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcfs/correlator.hpp"
#include "pcfs/photon_sim.hpp"

namespace pcfs {

/// Bad configuration or command-line usage.
class UsageError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

enum class Experiment { Pcfs, Fts };
enum class SdModel { None, Ou, Jump };

struct RunConfig {
    Experiment experiment = Experiment::Pcfs;

    // [emitter]
    double t1_ns = 1.9;
    double t2_ns = 2.0;
    double detected_rate = 1e5;
    SdModel sd_model = SdModel::Ou;
    double inhom_fwhm_ghz = 1.0;  ///< Δω∞/2π of the stationary envelope
    double tau_sd_s = 30e-6;

    // [interferometer]
    std::vector<double> deltas_ns;  ///< default: 14 points from 0 to 1.3 ns
    std::vector<Polarization> polarizations = {Polarization::Parallel, Polarization::Orthogonal};
    double v0 = 0.5;
    std::string drift = "scan";  ///< scan | walk | none
    double scan_rate_hz = 0.2;
    double drift_correlation_s = 0.3;
    double drift_amplitude = 1.0;

    // [laser]
    bool laser_reference = false;
    double laser_rate = 1e5;

    // [acquisition]
    double duration_s = 60.0;
    std::uint64_t seed = 1;

    // [fts]
    std::size_t fts_steps = 24;
    double fts_exposure_s = 0.5;

    // [binning]
    LogBinning binning;

    /// Throws UsageError on any invalid value.
    void validate() const;

    EmitterConfig emitter() const;
    InterferometerConfig interferometer(double delta_ns, Polarization p) const;
};

std::vector<double> default_deltas();

/// Parses the INI text. Unknown sections or keys are errors.
RunConfig config_from_ini(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);  ///< INI or manifest JSON

/// INI rendering with every key spelled out.
std::string config_to_ini(const RunConfig& c);

nlohmann::ordered_json config_to_json(const RunConfig& c);
RunConfig config_from_json(const nlohmann::json& j);

inline constexpr int kManifestVersion = 1;

struct ManifestEntry {
    std::string file;  ///< relative to the manifest directory
    std::string source;  ///< emitter | laser | fringe
    double delta_ns = 0.0;
    Polarization polarization = Polarization::Parallel;
    std::uint64_t seed = 0;
    std::uint64_t records = 0;
};

struct Manifest {
    RunConfig config;
    std::vector<ManifestEntry> entries;
};

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);

}  // namespace pcfs
