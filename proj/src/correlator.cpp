#include "pcfs/correlator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <thread>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "pcfs/errors.hpp"
#include "pcfs/units.hpp"

namespace pcfs {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::size_t kSentinels = 4;

bool close_rel(double a, double b) { return std::abs(a - b) <= 1e-9 * std::abs(b); }

// Per-edge pointer sums over x[i0, i1): S[k] = Σ_i #{y < x_i + E_k}.
// `y` ends with four UINT64_MAX sentinels that no bound reaches, so the
// pointer advance needs no range check. Each pointer moves about once per
// event on average, so one four-wide probe almost always suffices.
std::vector<std::uint64_t> pointer_sums(std::span<const std::uint64_t> x, std::size_t i0, std::size_t i1,
                                        std::span<const std::uint64_t> y,
                                        const std::vector<std::uint64_t>& edges) {
    const std::size_t ne = edges.size();
    std::vector<std::uint64_t> sums(ne, 0);
    if (i0 >= i1) return sums;
    std::vector<std::size_t> ptr(ne);
    for (std::size_t k = 0; k < ne; ++k)
        ptr[k] = static_cast<std::size_t>(std::lower_bound(y.begin(), y.end() - kSentinels, x[i0] + edges[k]) - y.begin());
    const std::uint64_t* yd = y.data();
    const std::uint64_t* ed = edges.data();
    std::size_t* pd = ptr.data();
    std::uint64_t* sd = sums.data();
    for (std::size_t i = i0; i < i1; ++i) {
        const std::uint64_t xi = x[i];
        for (std::size_t k = 0; k < ne; ++k) {
            const std::uint64_t bound = xi + ed[k];
            std::size_t p = pd[k];
            // y is sorted, so the four comparisons are monotone and their sum
            // is the advance; the loads are independent of each other
            std::size_t step;
            do {
                step = std::size_t{yd[p] < bound} + std::size_t{yd[p + 1] < bound} +
                       std::size_t{yd[p + 2] < bound} + std::size_t{yd[p + 3] < bound};
                p += step;
            } while (step == 4);
            pd[k] = p;
            sd[k] += p;
        }
    }
    return sums;
}

// Σ_t |([t + lo, t + hi) ∪ (t − hi, t − lo]) ∩ [0, T)| over sorted times t,
// in ps: the lag window each event actually has inside the run.
double window_exposure(std::span<const std::uint64_t> t, double span_ps, std::uint64_t lo, std::uint64_t hi) {
    const double width = static_cast<double>(hi - lo);
    const double dlo = static_cast<double>(lo), dhi = static_cast<double>(hi);
    // forward window: full once t <= T − hi, partial on (T − hi, T − lo)
    // backward window: full once t >= hi, partial on [lo, hi)
    double sum = 0.0;
    const auto head_lo = std::lower_bound(t.begin(), t.end(), lo);
    const auto head_hi = std::lower_bound(head_lo, t.end(), hi);
    sum += width * static_cast<double>(t.end() - head_hi);
    for (auto it = head_lo; it != head_hi; ++it) sum += static_cast<double>(*it) - dlo;
    for (auto it = t.rbegin(); it != t.rend(); ++it) {
        const double room = span_ps - static_cast<double>(*it);
        if (room >= dhi) {
            sum += width * static_cast<double>(t.rend() - it);
            break;
        }
        sum += std::max(room - dlo, 0.0);
    }
    return sum;
}

void check_edges(const std::vector<std::uint64_t>& edges) {
    if (edges.size() < 2) throw DomainError("count_pairs: need at least two edges");
    for (std::size_t k = 1; k < edges.size(); ++k)
        if (edges[k] <= edges[k - 1]) throw DomainError("count_pairs: edges must increase");
}

// Copy of `y` followed by the sentinels pointer_sums relies on.
std::vector<std::uint64_t> padded(std::span<const std::uint64_t> y) {
    std::vector<std::uint64_t> ys;
    ys.reserve(y.size() + kSentinels);
    ys.assign(y.begin(), y.end());
    ys.insert(ys.end(), kSentinels, std::numeric_limits<std::uint64_t>::max());
    return ys;
}

// Directed pair counts summed over blocks of x; `ys` carries the sentinels.
std::vector<std::uint64_t> blocked_counts(std::span<const std::uint64_t> x, std::span<const std::uint64_t> ys,
                                          const std::vector<std::uint64_t>& edges, unsigned workers) {
    if (!x.empty() && x.back() >= std::numeric_limits<std::uint64_t>::max() - edges.back())
        throw DomainError("count_pairs: timestamps too large");
    const std::size_t n = x.size();
    // below ~1e5 events per block threads cost more than they save
    const std::size_t nblocks = std::max<std::size_t>(1, std::min<std::size_t>(std::max(1u, workers), n / 100'000));
    std::vector<std::size_t> bounds(nblocks + 1);
    for (std::size_t b = 0; b <= nblocks; ++b) bounds[b] = n * b / nblocks;

    std::vector<std::vector<std::uint64_t>> out(nblocks);
    auto run = [&](std::size_t j) {
        const auto sums = pointer_sums(x, bounds[j], bounds[j + 1], ys, edges);
        out[j].resize(edges.size() - 1);
        for (std::size_t k = 0; k + 1 < sums.size(); ++k) out[j][k] = sums[k + 1] - sums[k];
    };
    if (nblocks == 1) {
        run(0);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < nblocks; ++w)
            pool.emplace_back([&] {
                for (std::size_t j = next++; j < nblocks; j = next++) run(j);
            });
        for (auto& t : pool) t.join();
    }
    std::vector<std::uint64_t> counts(edges.size() - 1, 0);
    for (const auto& part : out)
        for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += part[k];
    return counts;
}

}  // namespace

// --- binning ------------------------------------------------------------------

void LogBinning::validate() const {
    if (!all_finite({tau_min, tau_max, short_time_merge}))
        throw DomainError("LogBinning: non-finite parameter");
    if (tau_min <= 0.0) throw DomainError("LogBinning: tau_min must be > 0");
    if (tau_min >= tau_max) throw DomainError("LogBinning: need tau_min < tau_max");
    if (bins_per_decade < 1) throw DomainError("LogBinning: bins_per_decade must be >= 1");
    if (short_time_merge < 0.0) throw DomainError("LogBinning: short_time_merge must be >= 0");
    if (tau_min * kPicosecondsPerSecond < 1.0) throw DomainError("LogBinning: tau_min below 1 ps");
}

std::vector<double> LogBinning::edges() const {
    validate();
    const int wide = (bins_per_decade + 1) / 2;
    std::vector<double> out{tau_min};
    double e = tau_min;
    while (e < tau_max && !close_rel(e, tau_max)) {
        const bool short_region = e < short_time_merge && !close_rel(e, short_time_merge);
        double next = e * std::pow(10.0, 1.0 / (short_region ? wide : bins_per_decade));
        if (short_region && (next > short_time_merge || close_rel(next, short_time_merge)))
            next = short_time_merge;
        if (next > tau_max || close_rel(next, tau_max)) next = tau_max;
        out.push_back(next);
        e = next;
    }
    return out;
}

std::vector<std::uint64_t> LogBinning::edges_ps() const {
    std::vector<std::uint64_t> out;
    for (double e : edges()) {
        const auto ps = static_cast<std::uint64_t>(std::llround(e * kPicosecondsPerSecond));
        if (!out.empty() && ps <= out.back())
            throw DomainError("LogBinning: bins narrower than 1 ps after rounding");
        out.push_back(ps);
    }
    return out;
}

std::vector<double> LogBinning::centers() const {
    const auto e = edges_ps();
    std::vector<double> c(e.size() - 1);
    for (std::size_t k = 0; k + 1 < e.size(); ++k)
        c[k] = std::sqrt(static_cast<double>(e[k]) * static_cast<double>(e[k + 1])) / kPicosecondsPerSecond;
    return c;
}

// --- pair counting ------------------------------------------------------------

std::vector<std::uint64_t> count_pairs(const std::vector<std::uint64_t>& x, const std::vector<std::uint64_t>& y,
                                       const std::vector<std::uint64_t>& edges, unsigned workers) {
    check_edges(edges);
    return blocked_counts(x, padded(y), edges, workers);
}

CorrelationHistogram cross_correlate(const ClickStream& stream, const LogBinning& binning, unsigned workers) {
    binning.validate();
    // channel arrays carry the pointer_sums sentinels so they need no copy
    std::vector<std::uint64_t> pa, pb;
    const std::size_t n_a = stream.count(Channel::A);
    pa.reserve(n_a + kSentinels);
    pb.reserve(stream.records.size() - n_a + kSentinels);
    std::uint64_t prev = 0;
    for (const auto& r : stream.records) {
        if (r.timestamp_ps < prev) throw DomainError("cross_correlate: timestamps must be non-decreasing");
        prev = r.timestamp_ps;
        (r.channel == Channel::A ? pa : pb).push_back(r.timestamp_ps);
    }
    if (pa.empty() || pb.empty()) throw DegenerateInputError("cross_correlate: a channel has no events");
    pa.insert(pa.end(), kSentinels, std::numeric_limits<std::uint64_t>::max());
    pb.insert(pb.end(), kSentinels, std::numeric_limits<std::uint64_t>::max());
    const auto ta = std::span<const std::uint64_t>(pa).first(pa.size() - kSentinels);
    const auto tb = std::span<const std::uint64_t>(pb).first(pb.size() - kSentinels);
    const double duration = stream.duration_s;
    if (!(duration > binning.tau_max))
        throw DomainError("cross_correlate: tau_max must be below the stream duration");

    CorrelationHistogram h;
    h.binning = binning;
    h.edges_ps = binning.edges_ps();
    h.taus = binning.centers();
    h.n_a = ta.size();
    h.n_b = tb.size();
    h.duration_s = duration;
    h.rate_a = static_cast<double>(h.n_a) / duration;
    h.rate_b = static_cast<double>(h.n_b) / duration;
    h.delta_ns = stream.meta.delta_ns;
    h.polarization = stream.meta.polarization;

    check_edges(h.edges_ps);
    const auto ab = blocked_counts(ta, pb, h.edges_ps, workers);
    const auto ba = blocked_counts(tb, pa, h.edges_ps, workers);

    const std::size_t nb = h.edges_ps.size() - 1;
    h.raw_pairs.assign(nb, 0);
    h.g2.assign(nb, kNaN);
    h.sigma.assign(nb, kNaN);
    h.flagged.assign(nb, 1);

    // Expected pairs of independent streams, projected on the realized event
    // positions: E_A + E_B − E_0, where E_A integrates the density of B over
    // the lag windows of the actual A events (likewise E_B) and E_0 is the
    // unconditional mean. Events near either end of the run have truncated
    // windows; using the plain mean leaves that fluctuation in g² and it
    // exceeds the counting error at lags approaching the run length.
    const double span_ps = duration * kPicosecondsPerSecond;
    const double na = static_cast<double>(h.n_a), nbv = static_cast<double>(h.n_b);
    for (std::size_t k = 0; k < nb; ++k) {
        h.raw_pairs[k] = ab[k] + ba[k];
        if (h.raw_pairs[k] == 0) continue;
        const std::uint64_t lo = h.edges_ps[k], hi = h.edges_ps[k + 1];
        const double mid = 0.5 * (static_cast<double>(lo) + static_cast<double>(hi));
        const double e0 = na * nbv * 2.0 * static_cast<double>(hi - lo) * (span_ps - mid) / (span_ps * span_ps);
        const double ea = nbv / span_ps * window_exposure(ta, span_ps, lo, hi);
        const double eb = na / span_ps * window_exposure(tb, span_ps, lo, hi);
        const double expected = ea + eb - e0;
        const double n = static_cast<double>(h.raw_pairs[k]);
        h.g2[k] = n / expected;
        h.sigma[k] = h.g2[k] / std::sqrt(n);
        h.flagged[k] = 0;
    }
    return h;
}

// --- contrast -------------------------------------------------------------------

Plateau plateau(const CorrelationHistogram& h) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < h.g2.size() && idx.size() < 2; ++k)
        if (!h.flagged[k]) idx.push_back(k);
    if (idx.empty()) throw CalibrationError("plateau: histogram has no populated bins");
    double v = 0.0, var = 0.0;
    for (auto k : idx) {
        v += 1.0 - h.g2[k];
        var += h.sigma[k] * h.sigma[k];
    }
    const double m = static_cast<double>(idx.size());
    return {v / m, std::sqrt(var) / m};
}

ContrastColumn pcfs_contrast(const CorrelationHistogram& g2, const ContrastCalibration& cal) {
    const auto check_divisor = [](const Plateau& p, const char* what) {
        if (!(std::abs(p.value) >= 3.0 * p.sigma) || p.value == 0.0)
            throw CalibrationError(fmt::format("{} plateau {:.4g} ± {:.2g} is consistent with zero", what,
                                               p.value, p.sigma));
    };

    // scale = 1/divisor with relative error rel
    double scale = 1.0, rel2 = 0.0;
    std::string note = "raw 1-g2";
    Plateau reference{1.0, 0.0};
    if (cal.normalize_tau0) {
        reference = cal.zero_delay ? *cal.zero_delay : plateau(g2);
        check_divisor(reference, cal.zero_delay ? "zero-delay reference" : "own");
        scale /= reference.value;
        rel2 += std::pow(reference.sigma / reference.value, 2);
        note = fmt::format("tau0 plateau {:.6g} ({})", reference.value, cal.zero_delay ? "delta=0 column" : "own");
    }
    if (cal.laser) {
        if (!(cal.laser->edges_ps == g2.edges_ps))
            throw DomainError("pcfs_contrast: laser reference uses a different binning");
        const Plateau lp = plateau(*cal.laser);
        check_divisor(lp, "laser");
        const Plateau lz = cal.laser_zero_delay ? *cal.laser_zero_delay : reference;
        check_divisor(lz, "laser zero-delay");
        const double rolloff2 = lp.value / lz.value;
        scale /= rolloff2;
        rel2 += std::pow(lp.sigma / lp.value, 2);
        // the reference error is already counted when it is the emitter plateau
        if (cal.laser_zero_delay) rel2 += std::pow(lz.sigma / lz.value, 2);
        else if (cal.normalize_tau0) rel2 -= std::pow(reference.sigma / reference.value, 2);
        note += fmt::format("; laser rolloff^2 {:.6g}", rolloff2);
    }

    ContrastColumn c;
    c.delta_ns = g2.delta_ns;
    c.taus = g2.taus;
    for (auto e : g2.edges_ps) c.tau_edges.push_back(static_cast<double>(e) / kPicosecondsPerSecond);
    c.flagged = g2.flagged;
    c.calibration = note;
    const std::size_t n = g2.g2.size();
    c.contrast.assign(n, kNaN);
    c.sigma.assign(n, kNaN);
    for (std::size_t k = 0; k < n; ++k) {
        if (g2.flagged[k]) continue;
        const double v = (1.0 - g2.g2[k]) * scale;
        c.contrast[k] = v;
        c.sigma[k] = std::sqrt(std::pow(g2.sigma[k] * scale, 2) + v * v * std::max(rel2, 0.0));
    }
    return c;
}

PCFSSurface assemble_surface(std::vector<ContrastColumn> columns) {
    if (columns.empty()) throw DomainError("assemble_surface: no columns");
    std::sort(columns.begin(), columns.end(),
              [](const ContrastColumn& a, const ContrastColumn& b) { return a.delta_ns < b.delta_ns; });
    PCFSSurface s;
    s.taus = columns.front().taus;
    s.tau_edges = columns.front().tau_edges;
    s.calibration = columns.front().calibration;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const auto& c = columns[i];
        if (i > 0 && c.delta_ns == columns[i - 1].delta_ns)
            throw DomainError(fmt::format("assemble_surface: duplicate delta {} ns", c.delta_ns));
        if (c.taus != s.taus || c.tau_edges != s.tau_edges) throw DomainError("assemble_surface: columns use different lag bins");
        s.deltas.push_back(c.delta_ns);
        s.contrast.push_back(c.contrast);
        s.sigma.push_back(c.sigma);
        auto flags = c.flagged;
        for (std::size_t k = 0; k < flags.size(); ++k)
            if (!std::isfinite(c.contrast[k])) flags[k] = 1;
        s.flagged.push_back(std::move(flags));
    }
    return s;
}

// --- FTS fringes ---------------------------------------------------------------------

VisibilityEstimate fts_visibility_scan(const std::vector<double>& phases, const std::vector<double>& intensity,
                                       double delta_ns, double max_reduced_chi2) {
    const std::size_t n = phases.size();
    if (n != intensity.size()) throw DomainError("fts_visibility_scan: size mismatch");
    if (n < 3) throw DomainError("fts_visibility_scan: need at least 3 samples");
    const auto [lo, hi] = std::minmax_element(phases.begin(), phases.end());
    if (*hi - *lo < kTwoPi * (1.0 - 1.0 / static_cast<double>(n)) - 1e-9)
        throw DomainError("fts_visibility_scan: less than one fringe period sampled");

    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = std::cos(phases[i]);
        x(i, 2) = std::sin(phases[i]);
        y(i) = intensity[i];
        w(i) = 1.0 / std::max(intensity[i], 1.0);  // Poisson variance
    }
    const Eigen::MatrixXd xtw = x.transpose() * w.asDiagonal();
    const Eigen::Matrix3d normal = xtw * x;
    Eigen::LDLT<Eigen::Matrix3d> ldlt(normal);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12))
        throw FringeQualityError("fts_visibility_scan: phases do not constrain a sinusoid");
    const Eigen::Vector3d beta = ldlt.solve(xtw * y);
    const Eigen::Matrix3d cov = ldlt.solve(Eigen::Matrix3d::Identity());

    const Eigen::VectorXd r = y - x * beta;
    const double chi2 = (r.array().square() * w.array()).sum();
    const double red = n > 3 ? chi2 / static_cast<double>(n - 3) : 0.0;
    if (red > max_reduced_chi2)
        throw FringeQualityError(fmt::format("fts_visibility_scan: reduced chi2 {:.3g} exceeds {:.3g}", red,
                                             max_reduced_chi2));

    const double c = beta(0), a = beta(1), b = beta(2);
    if (!(c > 0.0)) throw FringeQualityError("fts_visibility_scan: non-positive mean intensity");
    const double amp = std::hypot(a, b);
    const double v = amp / c;
    Eigen::Vector3d grad(-v / c, amp > 0 ? a / (amp * c) : 0.0, amp > 0 ? b / (amp * c) : 0.0);
    return {delta_ns, v, std::sqrt(std::max(grad.dot(cov * grad), 0.0)), red};
}

VisibilityEstimate fts_visibility_scan(const FringeScan& scan, double max_reduced_chi2) {
    return fts_visibility_scan(scan.phases, scan.counts_a, scan.delta_ns, max_reduced_chi2);
}

}  // namespace pcfs
