#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pcfs/errors.hpp"
#include "pcfs/fitting.hpp"
#include "pcfs/spectra.hpp"
#include "pcfs/units.hpp"

using namespace pcfs;

namespace {

std::vector<double> grid(double lo, double hi, int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(lo + (hi - lo) * i / (n - 1));
    return out;
}

VisibilityCurve fts_curve(double t2, double t2s, double noise, std::mt19937_64& rng, int n = 27,
                          double delta_max = 1.3) {
    std::normal_distribution<double> z(0.0, 1.0);
    VisibilityCurve v;
    v.deltas = grid(0.0, delta_max, n);
    for (double d : v.deltas) {
        v.visibility.push_back(model_fts_visibility(d, t2, t2s) + noise * z(rng));
        v.sigma.push_back(noise);
    }
    return v;
}

// OU or jump surface averaged over the lag bins by Simpson quadrature, with
// optional Gaussian noise of fixed σ.
enum class Truth { Ou, Jump };
PCFSSurface synthetic_surface(Truth truth, double noise, std::uint64_t seed, const LogBinning& b = {},
                              double t2 = 2.0, double t2s_inf = 0.53, double tau_sd = 30e-6) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    PCFSSurface s;
    s.taus = b.centers();
    s.tau_edges = b.edges();
    s.deltas = grid(0.0, 1.3, 14);
    for (double d : s.deltas) {
        std::vector<double> c, e;
        for (std::size_t k = 0; k < s.taus.size(); ++k) {
            auto f = [&](double tau) {
                return truth == Truth::Ou ? model_pcfs_contrast(d, ou_voigt_params(tau, t2, t2s_inf, tau_sd))
                                          : model_pcfs_contrast(d, jump_params(tau, t2, t2s_inf, tau_sd));
            };
            const double lo = s.tau_edges[k], hi = s.tau_edges[k + 1];
            c.push_back(oracle::simpson(f, lo, hi, 400) / (hi - lo) + noise * z(rng));
            e.push_back(noise);
        }
        s.contrast.push_back(c);
        s.sigma.push_back(e);
        s.flagged.emplace_back(s.taus.size(), 0);
    }
    return s;
}

LogBinning lag_range(double lo, double hi) {
    LogBinning b;
    b.tau_min = lo;
    b.tau_max = hi;
    return b;
}

// gradient of a built-in model against central differences
double max_gradient_error(FitModel m, std::vector<double> sh, std::vector<double> lo, double x, const Dataset& d) {
    std::vector<double> g(sh.size() + lo.size());
    evaluate_model(m, x, sh, lo, d, 0, g);
    double worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        double& slot = k < sh.size() ? sh[k] : lo[k - sh.size()];
        const double keep = slot, h = 1e-6 * std::abs(keep);
        slot = keep + h;
        const double up = evaluate_model(m, x, sh, lo, d, 0);
        slot = keep - h;
        const double dn = evaluate_model(m, x, sh, lo, d, 0);
        slot = keep;
        const double fd = (up - dn) / (2.0 * h);
        // central-difference roundoff is about eps·|f|/h
        const double roundoff = 10.0 * 2.2e-16 * std::abs(evaluate_model(m, x, sh, lo, d, 0)) / h;
        worst = std::max(worst, std::max(std::abs(g[k] - fd) - roundoff, 0.0) / std::max(std::abs(fd), 1e-300));
    }
    return worst;
}

}  // namespace

TEST_CASE("noiseless FTS data recovers the generating times") {
    VisibilityCurve v;
    v.deltas = grid(0.0, 1.3, 27);
    for (double d : v.deltas) {
        v.visibility.push_back(model_fts_visibility(d, 2.0, 0.5));
        v.sigma.push_back(0.01);
    }
    const auto r = fit_fts(v, FtsModel::Voigt);
    CHECK(r.converged);
    CHECK(r.param("t2").value == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(r.param("t2_star").value == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(r.chi2 < 1e-12);
}

TEST_CASE("analytic gradients match central differences") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto between = [&](double lo, double hi) { return lo * std::pow(hi / lo, u(rng)); };
    Dataset binned;
    binned.x_lo = {0.0};
    binned.x_hi = {0.0};
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const double t2 = between(0.3, 5.0), ts = between(0.2, 3.0), delta = between(0.05, 1.3);
        const double a = 0.05 + 0.9 * u(rng), tsd = between(1e-6, 1e-3), tau = between(1e-7, 1e-2);
        binned.x_lo[0] = tau / between(1.2, 3.0);
        binned.x_hi[0] = tau * between(1.2, 3.0);
        worst = std::max(worst, max_gradient_error(FitModel::FtsVoigt, {t2, ts}, {}, delta, {}));
        worst = std::max(worst, max_gradient_error(FitModel::FtsExp, {t2}, {}, delta, {}));
        worst = std::max(worst, max_gradient_error(FitModel::FtsGauss, {ts}, {}, delta, {}));
        worst = std::max(worst, max_gradient_error(FitModel::PcfsVoigt, {t2}, {ts}, delta, {}));
        worst = std::max(worst, max_gradient_error(FitModel::PcfsGrj, {t2, ts}, {a}, delta, {}));
        worst = std::max(worst, max_gradient_error(FitModel::ExpDecay, {tsd}, {}, tau, binned));
        worst = std::max(worst, max_gradient_error(FitModel::ExpDecay, {tsd}, {}, tau, {}));
        worst = std::max(worst, max_gradient_error(FitModel::OuInhomLinewidth, {between(1.0, 10.0), tsd}, {}, tau,
                                                   binned));
        worst = std::max(worst, max_gradient_error(FitModel::OuTotalLinewidth, {between(1.0, 10.0), tsd, t2}, {},
                                                   tau, binned));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("bin-averaged Voigt model gradient matches central differences") {
    const std::vector<double> nodes = {2e-6, 6e-6, 1.5e-5, 3e-5};
    const auto model = pcfs_voigt_binned_model(nodes);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> p = {0.5 + 3.0 * u(rng)};
        for (std::size_t k = 0; k < nodes.size(); ++k) p.push_back(0.3 + 2.0 * u(rng));
        Dataset d;
        const std::size_t j = trial % nodes.size();
        d.tau_s = nodes[j];
        d.tau_lo = nodes[j] / 1.7;
        d.tau_hi = nodes[j] * 1.5;
        const double delta = 0.1 + 1.2 * u(rng);
        std::vector<double> g(p.size());
        model(delta, p, {}, d, 0, g);
        for (std::size_t k = 0; k < p.size(); ++k) {
            auto q = p;
            const double h = 1e-6 * p[k];
            q[k] = p[k] + h;
            const double up = model(delta, q, {}, d, 0, {});
            q[k] = p[k] - h;
            const double dn = model(delta, q, {}, d, 0, {});
            const double fd = (up - dn) / (2.0 * h);
            if (std::abs(fd) < 1e-12) {
                CHECK(std::abs(g[k]) < 1e-10);
                continue;
            }
            worst = std::max(worst, std::abs(g[k] - fd) / std::abs(fd));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("Voigt beats the exponential on Voigt data") {
    std::mt19937_64 rng(7);
    const auto v = fts_curve(2.0, 0.5, 0.01, rng);
    const auto voigt = fit_fts(v, FtsModel::Voigt);
    const auto expo = fit_fts(v, FtsModel::Exp);
    const auto gauss = fit_fts(v, FtsModel::Gauss);
    CHECK(voigt.reduced_chi2() < 1.5);
    CHECK(expo.reduced_chi2() > 3.0);
    CHECK(aic_difference(voigt, expo) > 0.0);
    CHECK(voigt.chi2 <= gauss.chi2 + 1e-6);
}

TEST_CASE("pure exponential truth leaves the Gaussian term negligible") {
    VisibilityCurve v;
    v.deltas = grid(0.0, 1.3, 27);
    for (double d : v.deltas) {
        v.visibility.push_back(std::exp(-d / 0.8));
        v.sigma.push_back(0.01);
    }
    const auto r = fit_fts(v, FtsModel::Voigt);
    CHECK(r.param("t2").value == doctest::Approx(0.8).epsilon(1e-6));
    const double ts = r.param("t2_star").value;
    CHECK(std::pow(1.3 / ts, 2) < 1e-6);
}

TEST_CASE("short T2 leaves T2* far less constrained than T2") {
    std::mt19937_64 rng(45);
    const auto v = fts_curve(0.45, 3.0, 0.01, rng);
    const auto r = fit_fts(v, FtsModel::Voigt);
    const auto& t2 = r.param("t2");
    const auto& ts = r.param("t2_star");
    CHECK(std::abs(t2.value - 0.45) < 3.0 * t2.sigma);
    // relative uncertainty of T2* far above that of T2
    CHECK(ts.sigma / ts.value > 5.0 * t2.sigma / t2.value);
}

TEST_CASE("Voigt never does worse than its nested limits") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double t2 = 0.3 * std::pow(20.0, u(rng)), ts = 0.3 * std::pow(10.0, u(rng));
        const auto v = fts_curve(t2, ts, 0.005 + 0.02 * u(rng), rng);
        const double cv = fit_fts(v, FtsModel::Voigt).chi2;
        const double ce = fit_fts(v, FtsModel::Exp).chi2;
        const double cg = fit_fts(v, FtsModel::Gauss).chi2;
        CHECK(cv <= std::min(ce, cg) + 1e-6);
    }
}

TEST_CASE("rescaling data and errors rescales only the amplitude") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 1.0);
    Dataset d;
    d.x = grid(0.0, 1.3, 20);
    for (double x : d.x) {
        d.y.push_back(0.8 * model_fts_visibility(x, 1.5, 0.6) + 0.01 * z(rng));
        d.sigma.push_back(0.01);
    }
    auto problem = [](const Dataset& data, double amp0) {
        FitProblem p;
        p.custom = [](double x, std::span<const double> s, std::span<const double>, const Dataset&, std::size_t,
                      std::span<double>) { return s[0] * model_fts_visibility(x, s[1], s[2]); };
        p.datasets = {data};
        p.sigma_floor = 0.0;
        p.shared = {{"amp", amp0, 0.0, kInf, true}, {"t2", 1.0, 1e-3, 1e9, true}, {"t2_star", 1.0, 1e-3, 1e9, true}};
        return p;
    };
    const double c = 3.7;
    Dataset scaled = d;
    for (auto& y : scaled.y) y *= c;
    for (auto& s : scaled.sigma) s *= c;
    const auto a = fit_least_squares(problem(d, 1.0));
    const auto b = fit_least_squares(problem(scaled, c));
    CHECK(a.converged);
    CHECK(b.converged);
    CHECK(b.param("amp").value / c == doctest::Approx(a.param("amp").value).epsilon(1e-10));
    CHECK(b.param("t2").value == doctest::Approx(a.param("t2").value).epsilon(1e-10));
    CHECK(b.param("t2_star").value == doctest::Approx(a.param("t2_star").value).epsilon(1e-10));
}

TEST_CASE("T2 and 2/T2 parameterizations reach the same minimum") {
    std::mt19937_64 rng(17);
    const auto v = fts_curve(1.2, 0.7, 0.01, rng);
    Dataset d{v.deltas, v.visibility, v.sigma};
    FitProblem p;
    p.custom = [](double x, std::span<const double> s, std::span<const double>, const Dataset&, std::size_t,
                  std::span<double>) { return model_fts_visibility(x, 2.0 / s[0], s[1]); };
    p.datasets = {d};
    p.shared = {{"dw_hom", 1.0, 1e-6, 1e6, true}, {"t2_star", 1.0, 1e-3, 1e9, true}};
    const auto rate = fit_least_squares(p);
    const auto time = fit_fts(v, FtsModel::Voigt);
    CHECK(std::abs(rate.chi2 - time.chi2) < 1e-8);
    CHECK(2.0 / rate.param("dw_hom").value == doctest::Approx(time.param("t2").value).epsilon(1e-6));
}

TEST_CASE("one-sigma intervals cover the truth 68% of the time") {
    std::mt19937_64 rng(68);
    int covered = 0;
    const int repeats = 200;
    for (int i = 0; i < repeats; ++i) {
        const auto r = fit_fts(fts_curve(2.0, 0.5, 0.01, rng), FtsModel::Voigt);
        const auto& t2 = r.param("t2");
        if (std::abs(t2.value - 2.0) <= t2.sigma) ++covered;
    }
    const double frac = static_cast<double>(covered) / repeats;
    CHECK(frac > 0.61);
    CHECK(frac < 0.75);
}

TEST_CASE("shared-T2 Voigt fit on an OU surface") {
    const auto s = synthetic_surface(Truth::Ou, 1e-3, 11);
    SurfaceFitOptions o;
    o.tau_max_s = 0.01;
    const auto r = fit_pcfs_voigt_global(s, o);
    REQUIRE(r.converged);
    CHECK(r.reduced_chi2() < 2.0);
    const auto& t2 = r.param("t2");
    CHECK(std::abs(t2.value - 2.0) < 3.0 * t2.sigma);
    const auto ts = r.column("t2_star");
    CHECK(ts.back() == doctest::Approx(0.53).epsilon(0.01));

    // inhomogeneous width rises monotonically, fastest near τSD
    for (std::size_t j = 1; j < r.linewidths.size(); ++j) {
        const auto& a = r.linewidths[j - 1];
        const auto& b = r.linewidths[j];
        CHECK(b.inhom_pcfs > a.inhom_pcfs - 2.0 * std::hypot(a.inhom_pcfs_sigma, b.inhom_pcfs_sigma));
    }
    REQUIRE(r.inflection_tau_s);
    CHECK(*r.inflection_tau_s > 30e-6 / 3.0);
    CHECK(*r.inflection_tau_s < 3.0 * 30e-6);

    // PCFS and FTS conventions differ by the constant sqrt(2/ln 2)
    for (const auto& w : r.linewidths)
        CHECK(w.inhom_pcfs / w.inhom_fts == doctest::Approx(std::sqrt(2.0 / kLn2)).epsilon(1e-12));
}

TEST_CASE("short-lag total linewidth approaches the homogeneous width") {
    const auto s = synthetic_surface(Truth::Ou, 1e-3, 12, lag_range(1e-8, 1e-4));
    const auto r = fit_pcfs_voigt_global(s);
    const auto& first = r.linewidths.front();
    REQUIRE(first.tau_s < 2e-8);
    const double hom = 2.0 / r.param("t2").value;
    CHECK(std::abs(first.total - hom) < 3.0 * first.total_sigma + 0.02 * hom);
    CHECK(std::abs(hom - 1.0) < 3.0 * 2.0 * r.param("t2").sigma / 4.0);
}

TEST_CASE("shared T2 agrees with the inverse-variance mean of per-slice fits") {
    const auto s = synthetic_surface(Truth::Ou, 2e-3, 13);
    SurfaceFitOptions o;
    o.tau_max_s = 0.01;
    o.bin_average = false;
    const auto global = fit_pcfs_voigt_global(s, o);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < s.n_taus(); ++k) {
        if (s.taus[k] > 0.01) continue;
        PCFSSurface one = s;
        SurfaceFitOptions single = o;
        single.tau_min_s = s.taus[k] * 0.999;
        single.tau_max_s = s.taus[k] * 1.001;
        const auto r = fit_pcfs_voigt_global(one, single);
        const auto& t2 = r.param("t2");
        num += t2.value / (t2.sigma * t2.sigma);
        den += 1.0 / (t2.sigma * t2.sigma);
    }
    const double mean = num / den, mean_sigma = 1.0 / std::sqrt(den);
    CHECK(std::abs(global.param("t2").value - mean) < std::hypot(global.param("t2").sigma, mean_sigma));
}

TEST_CASE("jump-model surface gives an exponential homogeneous weight") {
    const auto s = synthetic_surface(Truth::Jump, 1e-3, 21, lag_range(1e-7, 1e-2));
    const auto r = fit_pcfs_grj_global(s);
    REQUIRE(r.converged);
    CHECK(r.reduced_chi2() < 2.0);
    const auto a = r.column("a");
    const auto a_sig = r.column_sigma("a");
    CHECK(a.front() > 0.95);
    CHECK(a.back() < 0.02);
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double lo = s.tau_edges[j], hi = s.tau_edges[j + 1];
        const double expected = 30e-6 * (std::exp(-lo / 30e-6) - std::exp(-hi / 30e-6)) / (hi - lo);
        CHECK(std::abs(a[j] - expected) < 4.0 * a_sig[j] + 1e-3);
    }
    REQUIRE(r.tau_sd);
    CHECK(std::abs(r.tau_sd->value - 30e-6) < 0.3 * 30e-6);
}

TEST_CASE("jump model fitted to OU data: degenerate at high noise, rejected at low noise") {
    SurfaceFitOptions o;
    o.tau_max_s = 0.01;
    const auto noisy = fit_pcfs_grj_global(synthetic_surface(Truth::Ou, 0.05, 31), o);
    CHECK(noisy.reduced_chi2() < 2.0);
    const auto a = noisy.column("a");
    const auto a_sig = noisy.column_sigma("a");
    for (std::size_t j = 1; j < a.size(); ++j) CHECK(a[j] < a[j - 1] + 2.0 * std::hypot(a_sig[j], a_sig[j - 1]));

    const auto precise = fit_pcfs_grj_global(synthetic_surface(Truth::Ou, 1e-3, 32), o);
    const auto voigt = fit_pcfs_voigt_global(synthetic_surface(Truth::Ou, 1e-3, 32), o);
    CHECK(precise.reduced_chi2() > 100.0);
    CHECK(voigt.reduced_chi2() < 2.0);
    CHECK(aic_difference(voigt, precise) > 0.0);
    const auto ap = precise.column("a");
    for (std::size_t j = 1; j < ap.size(); ++j) CHECK(ap[j] <= ap[j - 1] + 1e-3);
    REQUIRE(precise.inflection_tau_s);
    CHECK(*precise.inflection_tau_s > 30e-6 / 3.0);
    CHECK(*precise.inflection_tau_s < 3.0 * 30e-6);
}

TEST_CASE("OU linewidth law recovers the correlation time") {
    std::mt19937_64 rng(40);
    std::normal_distribution<double> z(0.0, 1.0);
    const LogBinning b;
    const auto centers = b.centers();
    const double t2 = 2.0, dw = from_ghz(1.0);
    LinewidthSeries s;
    for (double tau : centers) {
        if (tau > 0.01) continue;
        const double sig = dw * std::sqrt(1.0 - std::exp(-tau / 30e-6)) / kGaussFwhmPerSigma;
        const double w = voigt_fwhm(2.0 / t2, sig);
        s.taus.push_back(tau);
        s.linewidth.push_back(w * (1.0 + 0.01 * z(rng)));
        s.sigma.push_back(0.01 * w);
    }
    const auto r = fit_ou_linewidth(s, t2);
    CHECK(r.converged);
    CHECK_FALSE(r.tau_sd_unidentifiable);
    const double tsd = r.param("tau_sd").value;
    CHECK(tsd > 15e-6);
    CHECK(tsd < 60e-6);
    CHECK(r.param("dw_inf").value == doctest::Approx(dw).epsilon(0.05));
    CHECK(r.reduced_chi2() < 2.0);
}

TEST_CASE("inhomogeneous-only linewidth variant") {
    LinewidthSeries s;
    for (double tau : LogBinning{}.centers()) {
        s.taus.push_back(tau);
        s.linewidth.push_back(5.0 * std::sqrt(1.0 - std::exp(-tau / 2e-5)));
        s.sigma.push_back(0.01);
    }
    const auto r = fit_ou_linewidth(s, 0.0, true);
    CHECK(r.param("tau_sd").value == doctest::Approx(2e-5).epsilon(1e-6));
    CHECK(r.param("dw_inf").value == doctest::Approx(5.0).epsilon(1e-8));
}

TEST_CASE("flat linewidth leaves the correlation time unidentified") {
    LinewidthSeries s;
    for (double tau : LogBinning{}.centers()) {
        s.taus.push_back(tau);
        s.linewidth.push_back(3.0);
        s.sigma.push_back(0.03);
    }
    const auto r = fit_ou_linewidth(s, 2.0);
    CHECK(r.tau_sd_unidentifiable);
}

TEST_CASE("a second slow process shows up as excess chi2") {
    const double t2 = 2.0, dw1 = from_ghz(1.0), dw2 = from_ghz(0.6);
    LinewidthSeries s;
    for (double tau : LogBinning{}.centers()) {
        const double var = dw1 * dw1 * (1.0 - std::exp(-tau / 30e-6)) + dw2 * dw2 * (1.0 - std::exp(-tau / 0.1));
        const double w = voigt_fwhm(2.0 / t2, std::sqrt(var) / kGaussFwhmPerSigma);
        s.taus.push_back(tau);
        s.linewidth.push_back(w);
        s.sigma.push_back(0.01 * w);
    }
    const auto r = fit_ou_linewidth(s, t2);
    CHECK(r.reduced_chi2() > 3.0);
    // the excess sits at the long lags
    const auto& res = r.residuals.front();
    double late = 0.0;
    for (std::size_t i = 0; i < s.taus.size(); ++i)
        if (s.taus[i] > 10e-3) late = std::max(late, std::abs(res[i]));
    CHECK(late > 3.0);
}

TEST_CASE("optimizer error handling") {
    Dataset d{{0.0, 0.5, 1.0, 1.5}, {1.0, 0.6, 0.4, 0.2}, {0.01, 0.01, 0.01, 0.01}};
    FitProblem p;
    p.custom = [](double x, std::span<const double> s, std::span<const double>, const Dataset&, std::size_t,
                  std::span<double>) { return std::exp(-x / s[0]); };
    p.datasets = {d};
    p.shared = {{"t2", 1.0, 1e-3, 1e9, true}, {"unused", 1.0, 0.0, 10.0, false}};
    CHECK_THROWS_AS(fit_least_squares(p), DegenerateModelError);

    p.shared = {{"t2", 20.0, 1e-3, 10.0, true}};
    CHECK_THROWS_AS(fit_least_squares(p), DomainError);
    p.shared = {{"t2", 1.0, 1e-3, 10.0, true}, {"t2", 1.0, 1e-3, 10.0, true}};
    CHECK_THROWS_AS(fit_least_squares(p), DomainError);

    p.shared = {{"t2", 1.0, 1e-3, 10.0, true}};
    p.datasets = {Dataset{{0.0}, {1.0}, {0.01}}};
    CHECK_THROWS_AS(fit_least_squares(p), DomainError);

    p.datasets = {d};
    p.max_iterations = 1;
    p.shared = {{"t2", 50.0, 1e-3, 1e3, true}};
    const auto r = fit_least_squares(p);
    CHECK_FALSE(r.converged);
    CHECK_FALSE(r.notices.empty());
}

TEST_CASE("fixed parameters stay put and leave the covariance") {
    Dataset d{grid(0.0, 1.3, 10), {}, std::vector<double>(10, 0.01)};
    for (double x : d.x) d.y.push_back(model_fts_visibility(x, 1.0, 0.8));
    FitProblem p;
    p.model = FitModel::FtsVoigt;
    p.datasets = {d};
    p.shared = {{"t2", 1.5, 1e-3, 1e9, true, true}, {"t2_star", 0.5, 1e-3, 1e9, true}};
    const auto r = fit_least_squares(p);
    CHECK(r.param("t2").value == 1.5);
    CHECK(r.param("t2").fixed);
    CHECK(r.covariance.rows() == 1);
    CHECK(r.dof == 9);
}

TEST_CASE("report is deterministic and complete") {
    const auto s = synthetic_surface(Truth::Ou, 1e-3, 11);
    SurfaceFitOptions o;
    o.tau_max_s = 0.01;
    const auto a = format_report(fit_pcfs_voigt_global(s, o));
    const auto b = format_report(fit_pcfs_voigt_global(s, o));
    CHECK(a == b);
    CHECK(a.find("t2 ") != std::string::npos);
    CHECK(a.find("chi2/dof") != std::string::npos);
    CHECK(a.find("linewidths") != std::string::npos);
}
