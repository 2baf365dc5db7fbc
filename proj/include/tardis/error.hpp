#pragma once

#include <stdexcept>
#include <string>

namespace tardis {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (trace rows, config files). Carries the line number
/// when one is known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A value violates a documented invariant or precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Capped-link cost is undefined at or above the link capacity.
class CapacityExceeded : public Error {
 public:
  using Error::Error;
};

/// The fixed-step integrator detected a Lyapunov increase.
class StepTooLarge : public Error {
 public:
  using Error::Error;
};

/// A price or cost came out NaN or infinite.
class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

}  // namespace tardis
