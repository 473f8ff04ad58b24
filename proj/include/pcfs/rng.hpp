#pragma once

#include <cstdint>
#include <random>

namespace pcfs {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of the independent stream `stream` derived from `root`.
///
/// Splitting rule: splitmix64(root XOR splitmix64(stream + 1)). Every worker,
/// δ point and polarization gets its own stream index, so runs are
/// reproducible regardless of scheduling order.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
    return splitmix64(root ^ splitmix64(stream + 1));
}

}  // namespace pcfs
