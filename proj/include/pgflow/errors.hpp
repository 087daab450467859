#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pgflow {

// Dimension and precondition violations are reported with std::invalid_argument.
// Everything below is a failure of the numerics or of the problem definition.

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedProblem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed, incomplete or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CflFailure : public NumericError {
 public:
  CflFailure(const std::string& what, long needed_substeps)
      : NumericError(what), needed_substeps_(needed_substeps) {}
  long needed_substeps() const { return needed_substeps_; }

 private:
  long needed_substeps_;
};

class ConservationFailure : public NumericError {
 public:
  using NumericError::NumericError;
};

class ArgmaxFailure : public NumericError {
 public:
  ArgmaxFailure(const std::string& what, double best_residual)
      : NumericError(what), best_residual_(best_residual) {}
  double best_residual() const { return best_residual_; }

 private:
  double best_residual_;
};

class BoxViolation : public NumericError {
 public:
  using NumericError::NumericError;
};

class StepFailure : public NumericError {
 public:
  using NumericError::NumericError;
};

class RegressionFailure : public NumericError {
 public:
  RegressionFailure(const std::string& what, std::size_t unvisited)
      : NumericError(what), unvisited_(unvisited) {}
  std::size_t unvisited() const { return unvisited_; }

 private:
  std::size_t unvisited_;
};

}  // namespace pgflow
