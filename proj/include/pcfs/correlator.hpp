#pragma once

// Log-binned A/B cross-correlation g²(τ), PCFS contrast columns with τ→0 and
// laser-reference normalization, contrast surfaces, and FTS fringe fits.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcfs/photon_sim.hpp"

namespace pcfs {

/// Logarithmic lag bins. Below short_time_merge the bins are twice as wide
/// in log space (ceil(bins_per_decade/2) per decade); the merge boundary
/// itself is always an edge.
struct LogBinning {
    double tau_min = 1e-6;
    double tau_max = 1.0;
    int bins_per_decade = 3;
    double short_time_merge = 10e-6;

    void validate() const;
    std::vector<double> edges() const;               ///< seconds, strictly increasing
    std::vector<std::uint64_t> edges_ps() const;     ///< rounded to integer ps
    std::vector<double> centers() const;             ///< geometric bin centers (s)
    std::size_t size() const { return edges_ps().size() - 1; }

    bool operator==(const LogBinning&) const = default;
};

struct CorrelationHistogram {
    LogBinning binning;
    std::vector<std::uint64_t> edges_ps;
    std::vector<double> taus;                ///< geometric bin centers (s)
    std::vector<double> g2;                  ///< NaN where no pairs
    std::vector<double> sigma;               ///< g2/sqrt(pairs), NaN where no pairs
    std::vector<std::uint64_t> raw_pairs;    ///< A→B plus B→A pairs per bin
    std::vector<std::uint8_t> flagged;       ///< 1 = no data
    std::uint64_t n_a = 0, n_b = 0;
    double rate_a = 0.0, rate_b = 0.0;       ///< counts/s
    double duration_s = 0.0;
    double delta_ns = 0.0;
    Polarization polarization = Polarization::Parallel;
};

/// Directed pair counts: entry k holds the number of (x, y) with
/// y − x in [edges[k], edges[k+1]). Inputs sorted ascending. Two-pointer
/// sweep, O((|x| + |y|)·bins), sharded over x across `workers` threads.
std::vector<std::uint64_t> count_pairs(const std::vector<std::uint64_t>& x,
                                       const std::vector<std::uint64_t>& y,
                                       const std::vector<std::uint64_t>& edges, unsigned workers = 1);

/// g²(τ) = (N_AB + N_BA) / E, where E is the pair count expected from
/// independent streams with the realized event positions: each event
/// contributes the part of its ±lag window that falls inside [0, T), weighted
/// by the other channel's density, and the unconditional mean
/// 2·N_A·N_B·Δτ·(T − τ_mid)/T² is subtracted once so that only the
/// first-order position fluctuations are removed. σ = g²/√pairs. Throws
/// DegenerateInputError for an empty channel and DomainError when tau_max is
/// not below the duration.
///
/// σ is counting noise only. With a fringe present the expected number of
/// partners of a photon depends on its fringe phase, so the photon count at
/// each phase adds a lag-independent offset to g² with a run-to-run standard
/// deviation of about 2·V_inst/√(N_A + N_B) that σ does not include.
CorrelationHistogram cross_correlate(const ClickStream& stream, const LogBinning& binning,
                                     unsigned workers = 1);

/// Mean of 1 − g² over the two shortest populated bins, with its error.
struct Plateau {
    double value = 0.0;
    double sigma = 0.0;
};
Plateau plateau(const CorrelationHistogram& h);

/// Contrast normalization. With normalize_tau0 the raw contrast 1 − g² is
/// divided by zero_delay (the plateau of the δ = 0 parallel column) or, when
/// that is absent, by the column's own plateau. A laser histogram at the same
/// δ divides by the relative rolloff plateau(laser)/laser_zero_delay, where
/// laser_zero_delay defaults to the emitter reference; the rolloff therefore
/// enters squared, as it does in the raw contrast.
struct ContrastCalibration {
    bool normalize_tau0 = true;
    std::optional<Plateau> zero_delay;
    const CorrelationHistogram* laser = nullptr;
    std::optional<Plateau> laser_zero_delay;
};

struct ContrastColumn {
    double delta_ns = 0.0;
    std::vector<double> taus;
    std::vector<double> tau_edges;  ///< s, taus.size() + 1 entries, empty when unknown
    std::vector<double> contrast;
    std::vector<double> sigma;
    std::vector<std::uint8_t> flagged;
    std::string calibration;  ///< human-readable summary of the applied factors
};

/// Throws CalibrationError when a divisor is within 3σ of zero and
/// DomainError when the laser binning differs.
ContrastColumn pcfs_contrast(const CorrelationHistogram& g2_parallel, const ContrastCalibration& cal = {});

struct PCFSSurface {
    std::vector<double> deltas;                   ///< ns, ascending
    std::vector<double> taus;                     ///< s
    std::vector<double> tau_edges;                ///< s, empty when unknown
    std::vector<std::vector<double>> contrast;    ///< [delta][tau]
    std::vector<std::vector<double>> sigma;
    std::vector<std::vector<std::uint8_t>> flagged;
    std::string calibration;

    std::size_t n_deltas() const { return deltas.size(); }
    std::size_t n_taus() const { return taus.size(); }
};

/// Sorts by δ. Throws DomainError on duplicate δ or mismatched lag bins.
PCFSSurface assemble_surface(std::vector<ContrastColumn> columns);

/// Sinusoid fit I(φ) = c + a·cos φ + b·sin φ weighted by Poisson errors,
/// V = sqrt(a² + b²)/c. Throws FringeQualityError when the reduced χ²
/// exceeds max_reduced_chi2 and DomainError when less than one period is
/// sampled.
struct VisibilityEstimate {
    double delta_ns = 0.0;
    double visibility = 0.0;
    double sigma = 0.0;
    double reduced_chi2 = 0.0;
};

VisibilityEstimate fts_visibility_scan(const std::vector<double>& phases, const std::vector<double>& intensity,
                                       double delta_ns = 0.0, double max_reduced_chi2 = 5.0);
VisibilityEstimate fts_visibility_scan(const FringeScan& scan, double max_reduced_chi2 = 5.0);

}  // namespace pcfs
