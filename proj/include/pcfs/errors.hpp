#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pcfs {

/// Input outside the mathematical domain of an operation (non-finite value,
/// non-positive time constant, mismatched grids, ...).
class DomainError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A frequency grid too coarse or too narrow for the lineshape asked of it.
class ResolutionError : public DomainError {
  public:
    using DomainError::DomainError;
};

/// Input that is well-formed but carries no usable information
/// (empty channel, all-flagged histogram, ...).
class DegenerateInputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// The Fourier transform of a would-be autocorrelation has negative lobes.
class NotAutocorrelationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A contrast normalization whose reference plateau is consistent with zero.
class CalibrationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Fringe samples that a sinusoid does not describe.
class FringeQualityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Singular normal equations in a least-squares fit.
class DegenerateModelError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed or truncated input file.
class FormatError : public std::runtime_error {
  public:
    FormatError(const std::string& what, std::uint64_t byte_offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}

    std::uint64_t byte_offset() const { return offset_; }

  private:
    std::uint64_t offset_ = 0;
};

}  // namespace pcfs
