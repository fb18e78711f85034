#pragma once

#include <stdexcept>
#include <string>

namespace superrad {

// Error hierarchy. The CLI maps each family onto its exit code:
// validation/argument errors -> 1, capability -> 2, numerical -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration or parameter value.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed call (empty window, missing observable, size mismatch).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

class IndexError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Request exceeds a configured size cap.
class CapabilityError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class IntegrationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Steady state is not unique.
class DegeneracyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SolverError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace superrad
