#pragma once

// Monte Carlo click streams from a spectrally diffusing emitter behind a
// Mach–Zehnder interferometer, plus the monochromatic laser reference and
// fixed-delay fringe scans for FTS.
//
// Per-photon port model: a photon detected at time t exits port A with
// probability ½ + V_inst·cos(ω_c(t)·δ + φ(t)), where V_inst = v0·rolloff(δ)·
// e^(−δ/T2) in parallel polarization and 0 in orthogonal polarization.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pcfs/sd_kernels.hpp"

namespace pcfs {

enum class Polarization : std::uint8_t { Parallel, Orthogonal };
enum class Channel : std::uint8_t { A = 0, B = 1 };

const char* to_string(Polarization p);
Polarization polarization_from_string(const std::string& s);

/// Interferometer phase φ(t) = offset + 2π·scan_rate·t + amplitude·W(t), with
/// W a Wiener process of increment variance 2Δt/correlation_time. For
/// amplitude 1 the fringe correlation ⟨cos(φ(t+τ) − φ(t))⟩ is e^(−τ/τ_c).
/// When the phase moves at all, the starting offset is drawn uniformly.
struct PhaseDrift {
    double correlation_time_s = 0.3;
    double amplitude = 1.0;
    double scan_rate_hz = 0.0;  ///< constant-velocity fringe sweep (fringes/s)

    void validate() const;
    bool moving() const { return amplitude > 0.0 || scan_rate_hz != 0.0; }
    static PhaseDrift none() { return {0.3, 0.0, 0.0}; }
    static PhaseDrift scan(double rate_hz) { return {0.3, 0.0, rate_hz}; }
};

/// Lazily evaluated interferometer phase (not wrapped).
class PhasePath {
  public:
    PhasePath(const PhaseDrift& drift, double phase_offset, std::uint64_t seed);

    /// Phase at time t (s); t must not decrease between calls.
    double advance_to(double t);

  private:
    PhaseDrift drift_;
    Rng rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    double offset_ = 0.0;
    double walk_ = 0.0;
    double time_ = 0.0;
};

struct PhaseSample {
    std::vector<double> times;   ///< s
    std::vector<double> phases;  ///< wrapped to [0, 2π)
};

/// Phase trajectory sampled every step_s over [0, duration_s].
PhaseSample phase_drift_path(const PhaseDrift& drift, double duration_s, double step_s,
                             std::uint64_t seed);

/// Multiplicative fringe contrast versus delay, linearly interpolated and
/// held constant outside the table. An empty table means 1 everywhere.
struct RolloffTable {
    std::vector<std::pair<double, double>> points;  ///< (delta ns, factor in [0, 1])

    void validate() const;
    double at(double delta_ns) const;
};

struct EmitterConfig {
    double t1 = 1.9;      ///< radiative lifetime (ns)
    double t2 = 2.0;      ///< homogeneous coherence time (ns)
    double omega0 = 0.0;  ///< center frequency offset (rad/ns); the SD process adds to it
    std::optional<SDProcess> sd;
    double detected_rate = 1e5;  ///< counts/s

    /// 0 < t2 <= 2·t1, detected_rate > 0, SD parameters valid.
    void validate() const;
};

struct InterferometerConfig {
    double delta_ns = 0.0;
    Polarization polarization = Polarization::Parallel;
    double v0 = 0.5;  ///< per-port fringe amplitude at zero delay, (0, 0.5]
    PhaseDrift drift;
    RolloffTable rolloff;
    double phase_offset = 0.0;

    void validate() const;
    double classical_amplitude() const;  ///< v0·rolloff(δ), 0 when orthogonal
};

struct ClickRecord {
    std::uint64_t timestamp_ps = 0;
    Channel channel = Channel::A;

    bool operator==(const ClickRecord&) const = default;
};

struct StreamMeta {
    std::string source;  ///< "emitter", "laser" or "file"
    double delta_ns = 0.0;
    Polarization polarization = Polarization::Parallel;
    std::uint64_t seed = 0;
    double rate = 0.0;
};

struct ClickStream {
    std::vector<ClickRecord> records;  ///< non-decreasing timestamps
    double duration_s = 0.0;
    StreamMeta meta;
    std::vector<std::string> warnings;

    std::size_t count(Channel c) const;
};

/// Poisson arrivals at emitter.detected_rate over [0, duration_s); each photon
/// routed per the port model with ω_c(t) = omega0 + SD(t) evaluated lazily.
/// Requires duration_s >= 1e-3. Warns when the mean inter-arrival time is
/// below 10·T1 (antibunching is not modeled).
ClickStream simulate_clicks(const EmitterConfig& emitter, const InterferometerConfig& interf,
                            double duration_s, std::uint64_t seed);

/// Monochromatic reference: V_inst = v0·rolloff(δ), fixed frequency, no SD.
ClickStream simulate_laser_reference(const InterferometerConfig& interf, double duration_s,
                                     double rate, std::uint64_t seed, double omega_laser = 0.0);

/// FTS fringe record at a fixed delay: the phase is stepped through
/// 2πk/n_steps (drift off) and each step integrates Poisson photons for
/// exposure_s while the SD process keeps evolving.
struct FringeScan {
    double delta_ns = 0.0;
    std::vector<double> phases;
    std::vector<double> counts_a;
    std::vector<double> counts_b;
};

FringeScan simulate_fringe_scan(const EmitterConfig& emitter, double delta_ns, std::size_t n_steps,
                                double exposure_s, std::uint64_t seed, double v0 = 0.5,
                                const RolloffTable& rolloff = {});

}  // namespace pcfs
