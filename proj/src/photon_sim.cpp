#include "pcfs/photon_sim.hpp"

#include <algorithm>
#include <cmath>

#include "pcfs/errors.hpp"
#include "pcfs/units.hpp"

namespace pcfs {

namespace {

// RNG stream indices under the per-stream seed
constexpr std::uint64_t kArrivalStream = 0;
constexpr std::uint64_t kSdStream = 1;
constexpr std::uint64_t kPhaseStream = 2;

void check_duration(double duration_s) {
    if (!std::isfinite(duration_s) || duration_s < 1e-3)
        throw DomainError("simulation duration must be >= 1 ms");
}

void check_rate(double rate) {
    if (!std::isfinite(rate) || rate <= 0.0) throw DomainError("detected rate must be > 0");
}

std::uint64_t to_ps(double t_s) {
    return static_cast<std::uint64_t>(std::llround(t_s * kPicosecondsPerSecond));
}

// Poisson arrivals over [0, duration); calls route(t) -> Channel per photon.
template <typename Route>
std::vector<ClickRecord> generate(double rate, double duration_s, Rng& rng, Route&& route) {
    std::vector<ClickRecord> out;
    out.reserve(static_cast<std::size_t>(rate * duration_s * 1.01 + 16));
    std::exponential_distribution<double> gap(rate);
    double t = gap(rng);
    while (t < duration_s) {
        out.push_back({to_ps(t), route(t)});
        t += gap(rng);
    }
    return out;
}

}  // namespace

const char* to_string(Polarization p) {
    return p == Polarization::Parallel ? "parallel" : "orthogonal";
}

Polarization polarization_from_string(const std::string& s) {
    if (s == "parallel" || s == "par") return Polarization::Parallel;
    if (s == "orthogonal" || s == "orth" || s == "perpendicular") return Polarization::Orthogonal;
    throw DomainError("unknown polarization '" + s + "'");
}

void PhaseDrift::validate() const {
    if (!all_finite({correlation_time_s, amplitude, scan_rate_hz}))
        throw DomainError("PhaseDrift: non-finite parameter");
    if (correlation_time_s <= 0.0) throw DomainError("PhaseDrift: correlation time must be > 0");
    if (amplitude < 0.0) throw DomainError("PhaseDrift: amplitude must be >= 0");
}

PhasePath::PhasePath(const PhaseDrift& drift, double phase_offset, std::uint64_t seed)
    : drift_(drift), rng_(seed), offset_(phase_offset) {
    drift_.validate();
    if (drift_.moving()) offset_ += std::uniform_real_distribution<double>(0.0, kTwoPi)(rng_);
}

double PhasePath::advance_to(double t) {
    if (t < time_) throw DomainError("PhasePath::advance_to: time went backwards");
    if (drift_.amplitude > 0.0 && t > time_)
        walk_ += std::sqrt(2.0 * (t - time_) / drift_.correlation_time_s) * normal_(rng_);
    time_ = t;
    return offset_ + kTwoPi * drift_.scan_rate_hz * t + drift_.amplitude * walk_;
}

PhaseSample phase_drift_path(const PhaseDrift& drift, double duration_s, double step_s,
                             std::uint64_t seed) {
    if (!(duration_s > 0.0) || !(step_s > 0.0))
        throw DomainError("phase_drift_path: duration and step must be > 0");
    PhasePath path(drift, 0.0, seed);
    PhaseSample out;
    const auto n = static_cast<std::size_t>(std::floor(duration_s / step_s)) + 1;
    out.times.reserve(n);
    out.phases.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * step_s;
        double phi = std::fmod(path.advance_to(t), kTwoPi);
        if (phi < 0.0) phi += kTwoPi;
        out.times.push_back(t);
        out.phases.push_back(phi);
    }
    return out;
}

void RolloffTable::validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto [d, f] = points[i];
        if (!all_finite({d, f}) || d < 0.0) throw DomainError("RolloffTable: invalid delay");
        if (f < 0.0 || f > 1.0) throw DomainError("RolloffTable: factors must lie in [0, 1]");
        if (i > 0 && d <= points[i - 1].first)
            throw DomainError("RolloffTable: delays must be strictly increasing");
    }
}

double RolloffTable::at(double delta_ns) const {
    if (points.empty()) return 1.0;
    if (delta_ns <= points.front().first) return points.front().second;
    if (delta_ns >= points.back().first) return points.back().second;
    const auto it = std::upper_bound(points.begin(), points.end(), delta_ns,
                                     [](double d, const auto& p) { return d < p.first; });
    const auto& [d1, f1] = *it;
    const auto& [d0, f0] = *(it - 1);
    return f0 + (f1 - f0) * (delta_ns - d0) / (d1 - d0);
}

void EmitterConfig::validate() const {
    if (!all_finite({t1, omega0, detected_rate}) || std::isnan(t2))
        throw DomainError("EmitterConfig: non-finite parameter");
    if (t1 <= 0.0) throw DomainError("EmitterConfig: t1 must be > 0");
    if (t2 <= 0.0 || t2 > 2.0 * t1) throw DomainError("EmitterConfig: need 0 < t2 <= 2·t1");
    check_rate(detected_rate);
    if (sd) pcfs::validate(*sd);
}

void InterferometerConfig::validate() const {
    if (!all_finite({delta_ns, v0, phase_offset}))
        throw DomainError("InterferometerConfig: non-finite parameter");
    if (delta_ns < 0.0) throw DomainError("InterferometerConfig: delta must be >= 0");
    if (v0 <= 0.0 || v0 > 0.5) throw DomainError("InterferometerConfig: v0 must lie in (0, 0.5]");
    drift.validate();
    rolloff.validate();
}

double InterferometerConfig::classical_amplitude() const {
    if (polarization == Polarization::Orthogonal) return 0.0;
    return v0 * rolloff.at(delta_ns);
}

std::size_t ClickStream::count(Channel c) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [c](const ClickRecord& r) { return r.channel == c; }));
}

ClickStream simulate_clicks(const EmitterConfig& emitter, const InterferometerConfig& interf,
                            double duration_s, std::uint64_t seed) {
    emitter.validate();
    interf.validate();
    check_duration(duration_s);

    ClickStream out;
    out.duration_s = duration_s;
    out.meta = {"emitter", interf.delta_ns, interf.polarization, seed, emitter.detected_rate};
    if (1.0 / emitter.detected_rate < 10.0 * emitter.t1 * 1e-9)
        out.warnings.push_back("mean inter-arrival time below 10·T1: antibunching is not modeled");

    Rng arrivals(derive_seed(seed, kArrivalStream));
    Rng sd_rng(derive_seed(seed, kSdStream));
    std::optional<LazyTrajectory> sd;
    if (emitter.sd) sd.emplace(*emitter.sd, sd_rng);
    PhasePath phase(interf.drift, interf.phase_offset, derive_seed(seed, kPhaseStream));

    const double delta = interf.delta_ns;
    const double v_inst = interf.classical_amplitude() * std::exp(-delta / emitter.t2);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    out.records = generate(emitter.detected_rate, duration_s, arrivals, [&](double t) {
        const double omega = emitter.omega0 + (sd ? sd->advance_to(t) : 0.0);
        const double phi = phase.advance_to(t);
        const double p_a = 0.5 + v_inst * std::cos(omega * delta + phi);
        return uniform(arrivals) < p_a ? Channel::A : Channel::B;
    });
    return out;
}

ClickStream simulate_laser_reference(const InterferometerConfig& interf, double duration_s,
                                     double rate, std::uint64_t seed, double omega_laser) {
    interf.validate();
    check_duration(duration_s);
    check_rate(rate);
    if (!std::isfinite(omega_laser)) throw DomainError("laser frequency must be finite");

    ClickStream out;
    out.duration_s = duration_s;
    out.meta = {"laser", interf.delta_ns, interf.polarization, seed, rate};

    Rng arrivals(derive_seed(seed, kArrivalStream));
    PhasePath phase(interf.drift, interf.phase_offset, derive_seed(seed, kPhaseStream));
    const double v_inst = interf.classical_amplitude();
    const double carrier = omega_laser * interf.delta_ns;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    out.records = generate(rate, duration_s, arrivals, [&](double t) {
        const double p_a = 0.5 + v_inst * std::cos(carrier + phase.advance_to(t));
        return uniform(arrivals) < p_a ? Channel::A : Channel::B;
    });
    return out;
}

FringeScan simulate_fringe_scan(const EmitterConfig& emitter, double delta_ns, std::size_t n_steps,
                                double exposure_s, std::uint64_t seed, double v0,
                                const RolloffTable& rolloff) {
    emitter.validate();
    rolloff.validate();
    if (n_steps < 3) throw DomainError("simulate_fringe_scan: need at least 3 phase steps");
    if (!(exposure_s > 0.0)) throw DomainError("simulate_fringe_scan: exposure must be > 0");
    if (!(delta_ns >= 0.0)) throw DomainError("simulate_fringe_scan: delta must be >= 0");
    if (v0 <= 0.0 || v0 > 0.5) throw DomainError("simulate_fringe_scan: v0 must lie in (0, 0.5]");

    Rng arrivals(derive_seed(seed, kArrivalStream));
    Rng sd_rng(derive_seed(seed, kSdStream));
    std::optional<LazyTrajectory> sd;
    if (emitter.sd) sd.emplace(*emitter.sd, sd_rng);

    const double v_inst = v0 * rolloff.at(delta_ns) * std::exp(-delta_ns / emitter.t2);
    std::exponential_distribution<double> gap(emitter.detected_rate);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    FringeScan scan;
    scan.delta_ns = delta_ns;
    double t = 0.0;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double phi = kTwoPi * static_cast<double>(k) / static_cast<double>(n_steps);
        const double end = static_cast<double>(k + 1) * exposure_s;
        double a = 0.0, b = 0.0;
        for (t += gap(arrivals); t < end; t += gap(arrivals)) {
            const double omega = emitter.omega0 + (sd ? sd->advance_to(t) : 0.0);
            if (uniform(arrivals) < 0.5 + v_inst * std::cos(omega * delta_ns + phi))
                a += 1.0;
            else
                b += 1.0;
        }
        // the overshooting arrival is memoryless: restart from the step boundary
        t = end;
        scan.phases.push_back(phi);
        scan.counts_a.push_back(a);
        scan.counts_b.push_back(b);
    }
    return scan;
}

}  // namespace pcfs
