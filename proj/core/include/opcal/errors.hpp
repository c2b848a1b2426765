#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace opcal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration (bad key, out-of-range parameter, unstable dt).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or malformed data: dimension mismatches, bad files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. Carries the 1-based line number of the offending line.
class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Numerical failure: singular systems, non-finite rollouts, domain errors.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace opcal
