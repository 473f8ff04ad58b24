#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "oracles.hpp"
#include "pcfs/correlator.hpp"
#include "pcfs/errors.hpp"
#include "pcfs/photon_sim.hpp"

using namespace pcfs;

namespace {

double a_fraction(const ClickStream& s) {
    return static_cast<double>(s.count(Channel::A)) / static_cast<double>(s.records.size());
}

double binomial_sd(double p, std::size_t n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

// ⟨cos(φ(t+lag) − φ(t))⟩ over a sampled path
double fringe_correlation(const PhaseSample& s, std::size_t lag) {
    double acc = 0.0;
    const std::size_t n = s.phases.size() - lag;
    for (std::size_t i = 0; i < n; ++i) acc += std::cos(s.phases[i + lag] - s.phases[i]);
    return acc / static_cast<double>(n);
}

}  // namespace

TEST_CASE("orthogonal polarization routes photons evenly") {
    EmitterConfig em;
    em.sd = OUProcess::from_fwhm(2.0 * std::numbers::pi, 30e-6);
    InterferometerConfig in;
    in.delta_ns = 0.4;
    in.polarization = Polarization::Orthogonal;
    const auto s = simulate_clicks(em, in, 5.0, 11);
    const double f = a_fraction(s);
    CHECK(std::abs(f - 0.5) < 3.0 * binomial_sd(0.5, s.records.size()));
}

TEST_CASE("fixed phase at zero delay gives the port probability") {
    EmitterConfig em;
    InterferometerConfig in;
    in.v0 = 0.25;
    in.drift = PhaseDrift::none();
    const auto s = simulate_clicks(em, in, 2.0, 5);
    CHECK(std::abs(a_fraction(s) - 0.75) < 3.0 * binomial_sd(0.75, s.records.size()));
}

TEST_CASE("realized rate matches the detected rate") {
    EmitterConfig em;
    em.detected_rate = 2e5;
    InterferometerConfig in;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto s = simulate_clicks(em, in, 1.0, seed);
        const double expected = em.detected_rate * 1.0;
        CHECK(std::abs(static_cast<double>(s.records.size()) - expected) < 3.0 * std::sqrt(expected));
        CHECK(std::is_sorted(s.records.begin(), s.records.end(),
                             [](const ClickRecord& a, const ClickRecord& b) { return a.timestamp_ps < b.timestamp_ps; }));
        CHECK(s.records.back().timestamp_ps < 1'000'000'000'000ULL);
    }
}

TEST_CASE("channels balance when the fringe averages out") {
    EmitterConfig em;
    em.sd = OUProcess::from_fwhm(2.0 * std::numbers::pi, 30e-6);
    InterferometerConfig in;
    in.delta_ns = 0.2;
    in.drift = PhaseDrift::scan(1.0);
    const auto s = simulate_clicks(em, in, 10.0, 21);
    CHECK(std::abs(a_fraction(s) - 0.5) < 3.0 * binomial_sd(0.5, s.records.size()));
}

TEST_CASE("streams are reproducible from the seed") {
    EmitterConfig em;
    em.sd = JumpProcess::from_fwhm(3.0, 1e-5);
    InterferometerConfig in;
    in.delta_ns = 0.7;
    const auto a = simulate_clicks(em, in, 0.05, 99);
    const auto b = simulate_clicks(em, in, 0.05, 99);
    const auto c = simulate_clicks(em, in, 0.05, 100);
    CHECK(a.records == b.records);
    CHECK(a.records != c.records);
    const auto la = simulate_laser_reference(in, 0.05, 1e5, 7);
    const auto lb = simulate_laser_reference(in, 0.05, 1e5, 7);
    CHECK(la.records == lb.records);
}

TEST_CASE("simulation preconditions") {
    EmitterConfig em;
    InterferometerConfig in;
    CHECK_THROWS_AS(simulate_clicks(em, in, 5e-4, 1), DomainError);
    CHECK_THROWS_AS(simulate_laser_reference(in, 1.0, 0.0, 1), DomainError);
    EmitterConfig bad = em;
    bad.t2 = 2.0 * bad.t1 + 0.1;
    CHECK_THROWS_AS(simulate_clicks(bad, in, 1.0, 1), DomainError);
    InterferometerConfig strong = in;
    strong.v0 = 0.6;
    CHECK_THROWS_AS(simulate_clicks(em, strong, 1.0, 1), DomainError);
    strong.v0 = 0.5;
    strong.delta_ns = -0.1;
    CHECK_THROWS_AS(simulate_clicks(em, strong, 1.0, 1), DomainError);

    EmitterConfig fast = em;
    fast.detected_rate = 1e8;  // 10 ns between photons, below 10·T1
    const auto s = simulate_clicks(fast, in, 1e-3, 1);
    CHECK(s.warnings.size() == 1);
    CHECK(simulate_clicks(em, in, 1e-3, 1).warnings.empty());
}

TEST_CASE("rolloff table interpolates and holds its ends") {
    RolloffTable t{{{0.0, 1.0}, {0.5, 0.8}, {1.5, 0.6}}};
    CHECK(t.at(0.25) == doctest::Approx(0.9));
    CHECK(t.at(1.0) == doctest::Approx(0.7));
    CHECK(t.at(2.0) == doctest::Approx(0.6));
    CHECK(RolloffTable{}.at(0.7) == 1.0);
    CHECK_THROWS_AS((RolloffTable{{{0.0, 1.0}, {0.0, 0.9}}}.validate()), DomainError);
    CHECK_THROWS_AS((RolloffTable{{{0.0, 1.2}}}.validate()), DomainError);
}

TEST_CASE("phase without drift stays constant") {
    PhaseDrift d;
    d.amplitude = 0.0;
    const auto p = phase_drift_path(d, 5.0, 0.01, 3);
    for (double phi : p.phases) CHECK(phi == 0.0);
}

TEST_CASE("phase drift correlation time") {
    PhaseDrift d;  // τc = 0.3 s
    const double step = 0.01;
    const auto p = phase_drift_path(d, 2000.0, step, 17);
    for (double phi : p.phases) {
        REQUIRE(phi >= 0.0);
        REQUIRE(phi < 2.0 * std::numbers::pi);
    }
    // log-linear fit of the fringe correlation over lags up to one correlation time
    std::vector<double> lags, logs;
    for (std::size_t lag = 2; lag <= 30; lag += 2) {
        lags.push_back(static_cast<double>(lag) * step);
        logs.push_back(std::log(fringe_correlation(p, lag)));
    }
    const auto [slope, intercept] = oracle::line_fit(lags, logs);
    const double tau_c = -1.0 / slope;
    CHECK(std::abs(tau_c - 0.3) < 0.2 * 0.3);
    CHECK(std::abs(intercept) < 0.05);

    // fringe terms decorrelate at lags far beyond τc
    const std::size_t far = 500;  // 5 s
    double acc = 0.0, acc2 = 0.0;
    const std::size_t n = p.phases.size() - far;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = std::cos(p.phases[i]) * std::cos(p.phases[i + far]);
        acc += v;
        acc2 += v * v;
    }
    const double mean = acc / static_cast<double>(n);
    // samples are correlated over ~τc/step; inflate the error accordingly
    const double se = std::sqrt(acc2 / static_cast<double>(n) / static_cast<double>(n) * (0.3 / step));
    CHECK(std::abs(mean) < 4.0 * se);
}

TEST_CASE("laser plateau matches the two-photon enumeration") {
    // P(c1, c2) averaged over a uniformly distributed fringe phase
    auto enumerate = [](double v) {
        const int n = 4096;
        double p_ab = 0.0, p_ba = 0.0, p_a = 0.0, p_b = 0.0;
        for (int i = 0; i < n; ++i) {
            const double th = 2.0 * std::numbers::pi * (i + 0.5) / n;
            const double pa = 0.5 + v * std::cos(th), pb = 1.0 - pa;
            p_ab += pa * pb;
            p_ba += pb * pa;
            p_a += pa;
            p_b += pb;
        }
        p_ab /= n;
        p_ba /= n;
        p_a /= n;
        p_b /= n;
        return 1.0 - (p_ab + p_ba) / (2.0 * p_a * p_b);
    };
    for (double v0 : {0.5, 0.3}) {
        InterferometerConfig in;
        in.v0 = v0;
        in.drift = PhaseDrift::scan(1.0);
        const auto s = simulate_laser_reference(in, 20.0, 1e5, 41);
        const auto h = cross_correlate(s, LogBinning{});
        const Plateau p = plateau(h);
        const double expected = enumerate(v0);
        CHECK(expected == doctest::Approx(2.0 * v0 * v0).epsilon(1e-12));
        CHECK(std::abs(p.value - expected) < 3.0 * p.sigma);
    }
}

TEST_CASE("laser contrast without drift is flat") {
    InterferometerConfig in;
    in.drift = PhaseDrift::none();
    in.phase_offset = 0.7;
    const auto h = cross_correlate(simulate_laser_reference(in, 10.0, 1e5, 8), LogBinning{});
    for (std::size_t k = 0; k < h.g2.size(); ++k) CHECK(std::abs(h.g2[k] - 1.0) < 3.0 * h.sigma[k]);
}

TEST_CASE("laser contrast under drift decays by one second") {
    InterferometerConfig in;  // random-walk drift, τc = 0.3 s
    const auto s = simulate_laser_reference(in, 400.0, 1e4, 12);
    LogBinning b;
    b.tau_max = 5.0;
    const auto h = cross_correlate(s, b);
    const auto c = pcfs_contrast(h);
    CHECK(c.contrast[0] == doctest::Approx(1.0).epsilon(0.05));
    for (std::size_t k = 0; k < c.taus.size(); ++k)
        if (h.edges_ps[k] >= 1'000'000'000'000ULL)
            // finite-run residual of the fringe average is of order sqrt(τc/T)
            CHECK(std::abs(c.contrast[k]) < 0.1);
}

TEST_CASE("homogeneous decay of the short-lag contrast") {
    EmitterConfig em;  // T2 = 2 ns, no SD
    InterferometerConfig in;
    in.drift = PhaseDrift::scan(0.5);
    std::vector<double> deltas, logs;
    for (int i = 0; i < 6; ++i) {
        in.delta_ns = 0.26 * i;
        const auto h = cross_correlate(simulate_clicks(em, in, 10.0, 300 + i), LogBinning{});
        deltas.push_back(in.delta_ns);
        logs.push_back(std::log(plateau(h).value));
    }
    const auto [slope, intercept] = oracle::line_fit(deltas, logs);
    const double t = -1.0 / slope;
    CHECK(std::abs(t - em.t2 / 2.0) < 0.1 * em.t2 / 2.0);
}
