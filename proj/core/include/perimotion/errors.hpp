#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace perimotion {

// Base of every library error. The CLI maps the concrete subclasses onto exit
// codes: ConfigError -> 2, DataError family -> 3, NumericalError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (shape mismatch, bad argument).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Unknown config key, malformed value, bad command-line flag.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(message), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Anything wrong with input data: file formats, geometry, volume invariants.
class DataError : public Error {
 public:
  using Error::Error;
};

// Magic or version mismatch; offset is the first byte that did not match.
class FormatError : public DataError {
 public:
  FormatError(std::size_t offset, const std::string& message)
      : DataError(message + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

// Header or payload parsed but violates a container invariant.
class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite values in a forward pass, integration or loss.
class NumericalError : public Error {
 public:
  NumericalError(std::int64_t index, const std::string& message)
      : Error(message), index_(index) {}

  // Epoch or integration step at which the failure was detected; -1 if unknown.
  std::int64_t index() const noexcept { return index_; }

 private:
  std::int64_t index_;
};

}  // namespace perimotion
