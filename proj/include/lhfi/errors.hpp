#pragma once

#include <stdexcept>
#include <string>

namespace lhfi {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input: bad CSV rows, inconsistent shapes, out-of-range config
/// values.  Messages carry enough context (file, row, column) to locate the
/// offending record.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

/// Raised when a chain cannot make progress (non-finite target at the
/// current state, degenerate draws where a spread is required, ...).
class SamplerError : public Error {
 public:
  explicit SamplerError(const std::string& msg) : Error(msg) {}
};

/// Raised when the requested model/start configuration is unusable before
/// the first sweep (e.g. a structured covariance that is not positive
/// definite at initialization).
class InitializationError : public SamplerError {
 public:
  explicit InitializationError(const std::string& msg) : SamplerError(msg) {}
};

/// Filesystem trouble: unreadable inputs, unwritable output directory.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace lhfi
