#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tsoftmax {

/// Violated precondition on an argument (shape, range, bracket).
class PreconditionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values, divergence, or an integrator that cannot proceed.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A quadrature or iterative estimate that did not reach its tolerance budget.
class EstimationError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// Malformed input file.
class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration; the message names the offending field.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-fatal warnings collected along a computation.
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
  bool empty() const { return warnings.empty(); }
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace tsoftmax
