#pragma once

#include <stdexcept>
#include <string>

namespace scm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value. The message names the offending field.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
public:
  ParseError(const std::string &what, long line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  long line() const noexcept { return line_; }

private:
  long line_;
};

/// Dimension mismatch between vectors, heads or labels.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// A precondition on an argument was violated.
class ContractError : public Error {
public:
  using Error::Error;
};

class InsufficientDataError : public Error {
public:
  using Error::Error;
};

/// Training produced a non-finite gradient or loss.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string &what, long iteration)
      : Error("iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

private:
  long iteration_;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace scm
