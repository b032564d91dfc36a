#pragma once

#include <stdexcept>
#include <string>

namespace sqr {

/// Invalid argument, precondition or shape violation.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed (singular system, non-finite value, empty
/// window, undefined statistic).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative solver hit its iteration cap without meeting tolerance.
class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, int iterations, double last_change)
      : NumericError(what), iterations_(iterations), last_change_(last_change) {}
  int iterations() const noexcept { return iterations_; }
  double last_change() const noexcept { return last_change_; }

 private:
  int iterations_;
  double last_change_;
};

/// Malformed or inconsistent input data (CSV ingestion).
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sqr
