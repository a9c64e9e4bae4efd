#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace levyflow {

// Spatial dimension is bounded so that points and Jacobians live on the stack.
inline constexpr int kMaxDim = 3;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

enum class ErrorKind {
  InvalidSpec,   // bad parameters, failed validation
  Query,         // lookup of a time that is not on the grid
  Divergence,    // divergent integral
  Numeric,       // non-finite state, quadrature or iteration failure
  Capability,    // operation needs a handle or mode that is not available
  Coverage,      // data does not cover the requested region
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Thrown by the fixed-point resolvent solve; carries the last contraction estimate.
class ContractionFailure : public Error {
 public:
  ContractionFailure(const std::string& what, double rate, int iterations)
      : Error(ErrorKind::Numeric, what), rate_(rate), iterations_(iterations) {}
  double rate() const noexcept { return rate_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double rate_;
  int iterations_;
};

/// Raised when a time step produces a non-finite state.
class NumericFailure : public Error {
 public:
  NumericFailure(const std::string& what, std::size_t step)
      : Error(ErrorKind::Numeric, what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline Vec zero_vec(int dim) { return Vec::Zero(dim); }

}  // namespace levyflow
