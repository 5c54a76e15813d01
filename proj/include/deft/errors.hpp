#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deft {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible operand dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid adapter / backend configuration (rank too large, bad learning rates, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation does not hold for its inputs.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::size_t step, double last_finite_loss);

  std::size_t step() const noexcept { return step_; }
  double last_finite_loss() const noexcept { return last_finite_loss_; }

 private:
  std::size_t step_;
  double last_finite_loss_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Base for malformed MAT1 / ADPT1 / config input.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  TruncatedError(const std::string& field, std::size_t expected, std::size_t actual);

  std::size_t expected_bytes() const noexcept { return expected_; }
  std::size_t actual_bytes() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

// File is longer than its header declares.
class LengthMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedMethodError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Checkpoint and base weight do not belong together.
class PairingError : public Error {
 public:
  using Error::Error;
};

}  // namespace deft
