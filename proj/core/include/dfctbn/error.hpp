#pragma once

#include <stdexcept>
#include <string>

namespace dfctbn {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, dimension mismatches, invalid arguments.
/// The CLI maps this family to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

class DataError : public InputError {
 public:
  using InputError::InputError;
};

class ChecksumError : public InputError {
 public:
  using InputError::InputError;
};

/// A file written by an incompatible format version.
class VersionError : public InputError {
 public:
  using InputError::InputError;
};

/// Numerical failure: overflow, non-convergence, singular systems.
/// The CLI maps this family to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class OverflowError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace dfctbn
