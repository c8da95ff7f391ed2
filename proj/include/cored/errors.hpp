#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cored {

// Every failure the library raises derives from Error, so callers (the CLI
// in particular) can map the whole taxonomy onto exit codes in one place.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape mismatch between tensors; message names both shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (negative width, zero batch, bad spec field).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Ill-formed data content (labels outside {0,1}, single-class split, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed binary file; carries the byte offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& msg, std::uint64_t byte_offset)
      : Error(msg + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::uint64_t byte_offset() const { return byte_offset_; }

 private:
  std::uint64_t byte_offset_ = 0;
};

// Attempt to update a frozen (teacher) network.
class FrozenNetworkError : public Error {
 public:
  using Error::Error;
};

// Metric preconditions violated (empty input, single-class AUROC, ...).
class MetricError : public Error {
 public:
  using Error::Error;
};

// API misuse caught at runtime (backward on a non-scalar, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite value encountered during optimisation; carries the epoch.
class NumericError : public Error {
 public:
  NumericError(const std::string& msg, std::size_t epoch)
      : Error(msg + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_ = 0;
};

// Referenced input file does not exist.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace cored
