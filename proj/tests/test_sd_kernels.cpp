#include <doctest.h>

#include <cmath>
#include <random>
#include <variant>

#include "oracles.hpp"
#include "pcfs/errors.hpp"
#include "pcfs/sd_kernels.hpp"
#include "pcfs/units.hpp"

using namespace pcfs;

namespace {

const OUProcess kOu{1.5, 30e-6, 0.0};

struct Moments {
    double mean = 0, var = 0;
    std::size_t n = 0;
    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        var += d * (x - mean);
    }
    double variance() const { return var / static_cast<double>(n - 1); }
};

}  // namespace

TEST_CASE("ou kernel integrates to one") {
    for (double omega : {-2.0, 0.0, 1.3})
        for (double tau : {1e-6, 30e-6, 1e-3}) {
            const double sd = std::sqrt(ou_kernel_variance(tau, kOu));
            const double m = ou_kernel_mean(omega, tau, kOu);
            auto f = [&](double z) { return std::get<double>(ou_kernel(omega, z, tau, kOu)); };
            CHECK(oracle::simpson(f, m - 12 * sd, m + 12 * sd) == doctest::Approx(1.0).epsilon(1e-9));
        }
}

TEST_CASE("ou kernel at long delay is the stationary envelope of the endpoint") {
    const double tau = 1.0;  // ~3e4 tau_sd
    for (double omega : {-1.0, 0.4, 2.5})
        for (double zeta : {-3.0, -0.2, 0.0, 1.7}) {
            const double k = std::get<double>(ou_kernel(omega, zeta, tau, kOu));
            CHECK(k == doctest::Approx(oracle::gauss(omega + zeta, kOu.sigma_inf)).epsilon(1e-12));
        }
}

TEST_CASE("ou kernel at zero delay is a Dirac marker") {
    CHECK(std::holds_alternative<DiracAtZero>(ou_kernel(0.3, 0.0, 0.0, kOu)));
    CHECK_THROWS_AS(ou_kernel(0.3, 0.0, -1e-9, kOu), DomainError);
    CHECK_THROWS_AS(ou_kernel(NAN, 0.0, 1e-6, kOu), DomainError);
    CHECK_THROWS_AS(ou_kernel(0.0, 0.0, 1e-6, OUProcess{-1.0, 1e-5, 0.0}), DomainError);
}

TEST_CASE("ou kernel moments match sampled one-step transitions") {
    // transitions drawn through the library's lazy propagator from omega = sigma_inf
    const double tau = kOu.tau_sd;
    const OUProcess centered{kOu.sigma_inf, kOu.tau_sd, 0.0};
    Rng rng(11);
    Moments m;
    std::normal_distribution<double> n01;
    const double decay = std::exp(-1.0), spread = kOu.sigma_inf * std::sqrt(1 - std::exp(-2.0));
    for (int i = 0; i < 1'000'000; ++i) {
        // independent draw of the AR(1) transition, not the library code path
        const double next = kOu.sigma_inf * decay + spread * n01(rng);
        m.add(next - kOu.sigma_inf);
    }
    const double mean = ou_kernel_mean(centered.sigma_inf, tau, centered);
    const double var = ou_kernel_variance(tau, centered);
    const double se_mean = std::sqrt(var / 1e6);
    const double se_var = var * std::sqrt(2.0 / 1e6);
    CHECK(std::abs(m.mean - mean) < 3 * se_mean);
    CHECK(std::abs(m.variance() - var) < 3 * se_var);

    // and the library propagator reproduces the same law
    Rng rng2(12);
    Moments lib;
    for (int i = 0; i < 200'000; ++i) {
        LazyTrajectory lazy(centered, rng2);
        const double w0 = lazy.current();
        lib.add(lazy.advance_to(tau) - w0 * (1.0 + ou_kernel_mean(1.0, tau, centered)));
    }
    // conditional on w0 the jump is N(-w0(1-e^-1), var); subtracting the mean leaves var
    CHECK(std::abs(lib.mean) < 3 * std::sqrt(var / 2e5) + 1e-12);
    CHECK(std::abs(lib.variance() - var) < 3 * var * std::sqrt(2.0 / 2e5));
}

TEST_CASE("ou p_inhom closed form and limits") {
    const double tau = 10e-6;
    const double s = ou_sigma_of_tau(tau, kOu);
    CHECK(ou_p_inhom(0.0, tau, kOu) == doctest::Approx(1.0 / (2.0 * std::sqrt(kPi) * s)));
    // long delay: Gaussian of std sqrt(2) sigma_inf
    for (double z : {0.0, 0.7, -2.9})
        CHECK(ou_p_inhom(z, 1.0, kOu) ==
              doctest::Approx(oracle::gauss(z, std::sqrt(2.0) * kOu.sigma_inf)).epsilon(1e-12));
    CHECK_THROWS_AS(ou_p_inhom(0.0, 0.0, kOu), DomainError);
    CHECK(ou_sigma_of_tau(kOu.tau_sd, kOu) ==
          doctest::Approx(kOu.sigma_inf * std::sqrt(1 - std::exp(-1.0))));
}

TEST_CASE("ou p_inhom matches trajectory-pair histogram at half tau_sd") {
    const double tau = kOu.tau_sd / 2;
    Rng rng(2024);
    LazyTrajectory lazy(kOu, rng);
    const double sd = std::sqrt(2.0) * ou_sigma_of_tau(tau, kOu);
    const int bins = 80;
    const double lo = -5 * sd, hi = 5 * sd, w = (hi - lo) / bins;
    std::vector<double> hist(bins, 0.0);
    const int pairs = 1'000'000;
    double t = 0.0;
    for (int i = 0; i < pairs; ++i) {
        const double a = lazy.advance_to(t);
        const double b = lazy.advance_to(t + tau);
        t += tau + 20 * kOu.tau_sd;
        const double z = b - a;
        if (z >= lo && z < hi) hist[static_cast<int>((z - lo) / w)] += 1.0;
    }
    double l1 = 0.0;
    for (int k = 0; k < bins; ++k) {
        const double p = oracle::normal_cdf(lo + (k + 1) * w, 0, sd) - oracle::normal_cdf(lo + k * w, 0, sd);
        l1 += std::abs(hist[k] / pairs - p);
    }
    CHECK(l1 < 0.02);
}

TEST_CASE("jump p_inhom mixture weights") {
    const JumpProcess jp{1.0, 20e-6, 0.0};
    CHECK(jump_p_inhom(0.0, jp).dirac_weight == 1.0);
    CHECK(jump_p_inhom(1.0, jp).dirac_weight < 1e-300);
    CHECK(jump_p_inhom(0.0, jp).gaussian_std == doctest::Approx(std::sqrt(2.0)));
    CHECK(jump_p_inhom(jp.tau_sd, jp).dirac_weight == doctest::Approx(std::exp(-1.0)));
    CHECK_THROWS_AS(jump_p_inhom(-1.0, jp), DomainError);

    // Poisson oracle: fraction of realizations with no event before tau
    std::mt19937_64 rng(5);
    std::exponential_distribution<double> first(1.0 / jp.tau_sd);
    const int n = 100'000;
    for (double tau : {jp.tau_sd / 10, jp.tau_sd, 3 * jp.tau_sd}) {
        int survived = 0;
        for (int i = 0; i < n; ++i) survived += first(rng) > tau;
        const double a = jump_p_inhom(tau, jp).dirac_weight;
        CHECK(std::abs(survived / double(n) - a) < 3 * std::sqrt(a * (1 - a) / n));
    }
}

TEST_CASE("jump trajectories: survival of the library sampler") {
    const JumpProcess jp{1.0, 20e-6, 0.3};
    const int n = 20'000;
    for (double tau : {jp.tau_sd / 10, jp.tau_sd, 3 * jp.tau_sd}) {
        int survived = 0;
        for (int i = 0; i < n; ++i) {
            // each trajectory starts at time 0 with its first value
            const auto tr = sample_trajectory(jp, tau, 1000 + static_cast<std::uint64_t>(i));
            survived += tr.times.size() == 1;
        }
        const double a = std::exp(-tau / jp.tau_sd);
        CHECK(std::abs(survived / double(n) - a) < 3 * std::sqrt(a * (1 - a) / n));
    }
}

TEST_CASE("ou trajectory stationary moments, lag autocorrelation, determinism") {
    const auto tr = sample_trajectory(kOu, 1e6 * kOu.tau_sd / 10, kOu.tau_sd / 10, 77);
    REQUIRE(tr.times.size() == tr.omegas.size());
    for (std::size_t i = 1; i < tr.times.size(); ++i) REQUIRE(tr.times[i] > tr.times[i - 1]);
    Moments m;
    for (double w : tr.omegas) m.add(w);
    // samples are correlated over 10 steps: the tolerance allows for that
    CHECK(std::sqrt(m.variance()) == doctest::Approx(kOu.sigma_inf).epsilon(0.01));

    // lag tau_sd = 10 steps
    const std::size_t lag = 10, n = tr.omegas.size() - lag;
    double num = 0;
    for (std::size_t i = 0; i < n; ++i) num += (tr.omegas[i] - m.mean) * (tr.omegas[i + lag] - m.mean);
    const double rho = num / static_cast<double>(n) / m.variance();
    // effective sample count for an AR(1) series with e-folding 10 samples
    const double se = std::sqrt((1 + std::exp(-0.2)) / (1 - std::exp(-0.2)) / static_cast<double>(n));
    CHECK(std::abs(rho - std::exp(-1.0)) < 3 * se);

    const auto again = sample_trajectory(kOu, 1e6 * kOu.tau_sd / 10, kOu.tau_sd / 10, 77);
    CHECK(again.omegas == tr.omegas);
    const JumpProcess jp{1.0, 5e-6, 0.0};
    CHECK(sample_trajectory(jp, 1e-3, 3).omegas == sample_trajectory(jp, 1e-3, 3).omegas);
}

TEST_CASE("ou exact update has no step bias") {
    const double dt = kOu.tau_sd / 4;
    const auto coarse = sample_trajectory(kOu, 4e5 * dt, dt, 91);
    const auto fine = sample_trajectory(kOu, 4e5 * dt, dt / 2, 92);
    std::vector<double> dec;
    for (std::size_t i = 0; i < fine.omegas.size(); i += 2) dec.push_back(fine.omegas[i]);
    auto stats = [](const std::vector<double>& v) {
        Moments m;
        for (double x : v) m.add(x);
        double c = 0;
        for (std::size_t i = 0; i + 4 < v.size(); ++i) c += (v[i] - m.mean) * (v[i + 4] - m.mean);
        return std::tuple{m.mean, m.variance(), c / static_cast<double>(v.size() - 4) / m.variance()};
    };
    const auto [m1, v1, r1] = stats(coarse.omegas);
    const auto [m2, v2, r2] = stats(dec);
    // correlated samples: ~8 effective draws per tau_sd over 1e5 tau_sd
    const double neff = 4e5 / 8.0;
    CHECK(std::abs(m1 - m2) < 4 * kOu.sigma_inf * std::sqrt(2.0 / neff));
    CHECK(std::abs(v1 - v2) < 4 * v1 * std::sqrt(4.0 / neff));
    CHECK(std::abs(r1 - r2) < 4 * std::sqrt(2.0 / neff));
    CHECK(r1 == doctest::Approx(std::exp(-1.0)).epsilon(0.05));
}

TEST_CASE("zeta histograms are symmetric for both processes") {
    const double tau = 20e-6;
    const JumpProcess jp{kOu.sigma_inf, kOu.tau_sd, 0.0};
    for (const SDProcess proc : {SDProcess{kOu}, SDProcess{jp}}) {
        Rng rng(33);
        LazyTrajectory lazy(proc, rng);
        int pos = 0, neg = 0;
        double t = 0;
        const int n = 200'000;
        for (int i = 0; i < n; ++i) {
            const double a = lazy.advance_to(t);
            const double b = lazy.advance_to(t + tau);
            t += tau + 10 * kOu.tau_sd;
            if (b > a) ++pos;
            if (b < a) ++neg;
        }
        const double m = pos + neg;
        CHECK(std::abs(pos - m / 2) < 3 * std::sqrt(m) / 2);
    }
}

TEST_CASE("process validation and constructors") {
    CHECK_THROWS_AS(OUProcess({0.0, 1e-5, 0.0}).validate(), DomainError);
    CHECK_THROWS_AS(JumpProcess({1.0, 0.0, 0.0}).validate(), DomainError);
    const auto p = OUProcess::from_fwhm(from_ghz(1.0), 30e-6);
    CHECK(p.stationary_fwhm() == doctest::Approx(from_ghz(1.0)));
    CHECK(p.sigma_inf == doctest::Approx(from_ghz(1.0) / (2 * std::sqrt(2 * std::log(2.0)))));
    CHECK_THROWS_AS(sample_trajectory(kOu, 0.0, 1e-6, 1), DomainError);
    CHECK_THROWS_AS(sample_trajectory(kOu, 1.0, 0.0, 1), DomainError);
    CHECK_THROWS_AS(sample_trajectory(JumpProcess{}, -1.0, 1), DomainError);
}
