#pragma once

#include <stdexcept>
#include <string>

namespace dlab {

/// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration or input schema violation (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numeric failure inside a pipeline stage (CLI exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A stage precondition does not hold (small-gain violated, uncertified
/// strip, non-compact support, ...).
class PreconditionError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Unwritable or unreadable artifact path (CLI exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

/// A limiting system has a characteristic root on the imaginary axis.
class NotHyperbolicError : public NumericError {
 public:
  NotHyperbolicError(const std::string& msg, double axis_z)
      : NumericError(msg), axis_z_(axis_z) {}

  /// Imaginary part of the offending axis root.
  double axis_z() const { return axis_z_; }

 private:
  double axis_z_;
};

}  // namespace dlab
