#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace burnscar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: unknown keys, bad values, degenerate generator settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data does not satisfy an operation's preconditions.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Shape mismatch between tensors, rasters or masks.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// Malformed binary file. Carries the byte offset at which decoding failed.
class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
        detail_(what),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }
  /// Message without the offset suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::uint64_t offset_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(int epoch)
      : Error("non-finite loss at epoch " + std::to_string(epoch)), epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace burnscar
