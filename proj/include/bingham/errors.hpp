#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bingham {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (bad shape, non-symmetric matrix, bad config).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written, or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// The contour quadrature produced an unusable result (imaginary residual too large,
/// non-positive constant, moments outside (0,1)).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Rejection sampler acceptance collapsed.
class SamplerError : public Error {
 public:
  using Error::Error;
};

/// Optimisation produced NaN/Inf. Carries the iteration and parameter vector.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int iteration, std::vector<double> theta)
      : Error(what), iteration_(iteration), theta_(std::move(theta)) {}

  int iteration() const noexcept { return iteration_; }
  const std::vector<double>& theta() const noexcept { return theta_; }

 private:
  int iteration_;
  std::vector<double> theta_;
};

}  // namespace bingham
