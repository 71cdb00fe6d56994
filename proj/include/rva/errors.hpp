#pragma once

#include <stdexcept>
#include <string>

namespace rva {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidJointVector : public Error {
 public:
  using Error::Error;
};

/// Damped least-squares iteration did not reach the target.
class NoConvergence : public Error {
 public:
  using Error::Error;
};

/// The target is reachable only by leaving the joint limits.
class JointLimitViolation : public Error {
 public:
  using Error::Error;
};

class NoVesselFound : public Error {
 public:
  using Error::Error;
};

class NoIntersection : public Error {
 public:
  using Error::Error;
};

class NoVesselDetected : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class DegenerateSegment : public Error {
 public:
  using Error::Error;
};

class EmptyBatch : public Error {
 public:
  using Error::Error;
};

class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// A configuration value is missing, unknown or out of bounds. `key()` is the
/// dotted path of the offending entry, e.g. "us.depth_cm".
class ValidationError : public Error {
 public:
  explicit ValidationError(std::string key, const std::string& detail = {})
      : Error(detail.empty() ? "invalid value for '" + key + "'"
                             : "invalid value for '" + key + "': " + detail),
        key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace rva
