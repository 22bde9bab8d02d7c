#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace frailtyfit {

// Malformed input text. line() is 1-based (header is line 1), 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& msg, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite or overflowing intermediate that log-scaling could not absorb.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Quadrature failed its node-doubling self check.
class AccuracyError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The data carry no information for the requested estimate (no events,
// empty weighted risk set, ...).
class EstimationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class LinearAlgebraError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace frailtyfit
