#pragma once

#include <stdexcept>
#include <string>

namespace crowdreg {

// Base of every library error. `exit_code()` is what the CLI returns.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

// Invalid parameters or configuration (divisibility, improper prior, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// Bad argument to an operation: out-of-range ids, size mismatches.
class ArgumentError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Posterior with neither a proper prior nor any observation.
class UndefinedPosteriorError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// Random graph generation could not produce a simple graph.
class GenerationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Brute-force enumeration above the configured cap.
class IntractableError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Malformed CSV or config file content.
class FormatError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

// Non-finite values appeared during inference.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace crowdreg
