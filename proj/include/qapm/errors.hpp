#pragma once

#include <stdexcept>
#include <string>

namespace qapm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument values (probabilities out of range, infeasible degrees, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, overflow, or a numerical routine that did not converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Random generation gave up after its retry budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Misuse of an API contract (e.g. backward from a non-scalar node).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Quadratic form with a zero or negative denominator.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Matrix expected to be symmetric positive definite is not.
class NotSpdError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Checkpoint or configuration that is incompatible with the requested use.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace qapm
