#pragma once

#include <stdexcept>
#include <string>

namespace agml {

// Error taxonomy used across the library. Callers catch the base type unless
// they need to branch on the category.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition.
struct ContractError : Error {
  using Error::Error;
};

// Malformed external input (files, config). Carries location where known.
struct ParseError : Error {
  using Error::Error;
};

// Structurally well-formed input that violates semantic rules.
struct ValidationError : Error {
  using Error::Error;
};

// Non-finite values, non-convergent iterations, singular systems.
struct NumericalError : Error {
  double residual = 0.0;
  explicit NumericalError(const std::string& what, double res = 0.0)
      : Error(what), residual(res) {}
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace agml
