#pragma once

#include <stdexcept>
#include <string>

namespace bmaforge {

/// Base of every error raised by the library. Each subclass maps onto one
/// process exit code in the command-line harness.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes, layer counts or lengths that do not agree with each other.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters, configuration values or preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite losses, failed factorizations, sampler breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A statistic is undefined for the given input (zero variance, ambiguous
/// calibration target).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated input files.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace bmaforge
