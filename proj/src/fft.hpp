#pragma once

// Thin RAII layer over FFTW for the power-of-two grids used by the spectra
// module. Plans are created with FFTW_ESTIMATE under a global mutex (the FFTW
// planner is not thread safe); execution uses per-call buffers.

#include <complex>
#include <span>
#include <vector>

namespace pcfs::detail {

/// Forward DFT X[j] = Σ_k x[k]·exp(−2πi·jk/N).
std::vector<std::complex<double>> dft(std::span<const std::complex<double>> x);
std::vector<std::complex<double>> dft(std::span<const double> x);

/// Inverse DFT including the 1/N factor.
std::vector<std::complex<double>> idft(std::span<const std::complex<double>> x);

/// Rotates a centered array (zero lag at index N/2) so that zero lag is at index 0.
template <typename T>
std::vector<T> ifftshift(std::span<const T> x) {
    const std::size_t n = x.size(), h = n / 2;
    std::vector<T> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = x[(k + h) % n];
    return out;
}

/// Inverse of ifftshift for even N.
template <typename T>
std::vector<T> fftshift(std::span<const T> x) {
    const std::size_t n = x.size(), h = n / 2;
    std::vector<T> out(n);
    for (std::size_t k = 0; k < n; ++k) out[(k + h) % n] = x[k];
    return out;
}

}  // namespace pcfs::detail
