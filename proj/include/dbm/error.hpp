#pragma once

#include <stdexcept>
#include <string>

namespace dbm {

enum class ErrorKind {
  ZeroVector,
  IndexOutOfRange,
  InvalidConfig,
  InvalidDims,
  ShapeMismatch,
  StaleCache,
  NonFiniteLoss,
  CenterSamplingFailed,
  ParseError,
  CountMismatch,
  LengthMismatch,
  SingularScatter,
  DegenerateVariance,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the trainer; carries where the loss went non-finite.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(int epoch, int batch)
      : Error(ErrorKind::NonFiniteLoss,
              "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}

  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace dbm
