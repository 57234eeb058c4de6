#pragma once

#include <stdexcept>
#include <string>

namespace costfuse {

/// Base of every error raised by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, malformed files, configuration problems (exit code 1).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A required upstream artifact or stage is missing (exit code 2).
class DependencyError : public Error {
 public:
  using Error::Error;
};

/// Numeric failure or I/O failure while running (exit code 3).
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

class InvalidClassError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class GenerationError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class IoError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class NumericError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

/// Parse error carrying the 1-based line number of the offending input.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : ValidationError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace costfuse
