#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace srfe {

enum class ErrorKind {
  DimensionMismatch,
  InvalidTau,
  InvalidDistribution,
  DisjointSupport,
  AbsoluteContinuityViolated,
  NonFiniteValue,
  InvalidArgument,
  StencilOutsideSimplex,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidTau: return "InvalidTau";
    case ErrorKind::InvalidDistribution: return "InvalidDistribution";
    case ErrorKind::DisjointSupport: return "DisjointSupport";
    case ErrorKind::AbsoluteContinuityViolated: return "AbsoluteContinuityViolated";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::StencilOutsideSimplex: return "StencilOutsideSimplex";
  }
  return "Unknown";
}

/// Library-wide exception. `index` carries the offending sample, support
/// point or training step when one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), index_(index) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> index_;
};

namespace detail {

inline void require_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw Error(ErrorKind::InvalidTau, "tau must lie strictly inside (0, 1), got " + std::to_string(tau));
  }
}

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorKind::DimensionMismatch,
                std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

}  // namespace detail
}  // namespace srfe
