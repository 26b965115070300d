#pragma once

#include <stdexcept>
#include <string>

namespace lift3d {

// Error taxonomy shared across the library. The CLI maps these onto its
// exit-code contract: input/config errors -> 2, numeric failures -> 3,
// I/O failures -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments: mismatched sizes, indices out of range, malformed files.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// Shape mismatch between tensors participating in an op.
class ShapeError : public InvalidInputError {
 public:
  using InvalidInputError::InvalidInputError;
};

// Value outside the mathematical domain of an op (log of a negative, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Numerical failure: non-convergence, non-finite values mid-computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lift3d
