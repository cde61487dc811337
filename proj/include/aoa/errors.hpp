#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace aoa {

// Shapes disagree for an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller violated a precondition (bad token, non-scalar loss, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid model/training configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or unreadable input file. offset() is the byte (or line) position
// where the problem was detected.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  explicit DataError(const std::string& what) : std::runtime_error(what), offset_(0) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class MagicError : public DataError {
 public:
  using DataError::DataError;
};
class VersionError : public DataError {
 public:
  using DataError::DataError;
};
class TruncationError : public DataError {
 public:
  using DataError::DataError;
};
class ShapeMismatchError : public DataError {
 public:
  using DataError::DataError;
};

// NaN/Inf detected in a parameter during training.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& parameter, const std::string& what)
      : std::runtime_error(what + ": " + parameter), parameter_(parameter) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

}  // namespace aoa
