#pragma once

#include <stdexcept>
#include <string>

namespace lai {

// Base for all library errors so callers can catch everything from this
// project in one handler while the CLI maps subtypes to exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller broke an operation's contract (shape mismatch, non-scalar loss,
// bad argument combination).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Spatial geometry is unusable: empty conv output, pool on non-divisible
// dims, tile size not divisible by 2^depth.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Stored data is malformed at the value level (mask class out of range).
class DataCorruptionError : public Error {
 public:
  using Error::Error;
};

// Normalization statistics are degenerate (zero std).
class DegenerateStatsError : public Error {
 public:
  using Error::Error;
};

// TilePack / checkpoint container errors, one subtype per failure mode.
class PackError : public Error {
 public:
  using Error::Error;
};
class PackVersionError : public PackError {
 public:
  using PackError::PackError;
};
class PackTruncatedError : public PackError {
 public:
  PackTruncatedError(const std::string& field, std::size_t expected_bytes,
                     std::size_t actual_bytes)
      : PackError("blob '" + field + "' truncated: expected " +
                  std::to_string(expected_bytes) + " bytes, found " +
                  std::to_string(actual_bytes)),
        field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};
class PackSizeError : public PackError {
 public:
  using PackError::PackError;
};

// Checkpoint parameter names do not line up with the target model.
class CheckpointMismatchError : public Error {
 public:
  using Error::Error;
};

// A path named on the command line or in a manifest does not exist.
class FileNotFoundError : public Error {
 public:
  using Error::Error;
};

// Malformed run configuration file.
class ConfigParseError : public Error {
 public:
  using Error::Error;
};

// Every pixel in a batch is masked out; the caller should skip the batch.
class AllMaskedBatchError : public Error {
 public:
  using Error::Error;
};

// An entire epoch produced no usable batch.
class DegenerateDatasetError : public Error {
 public:
  using Error::Error;
};

// Ground truth has no variance over valid pixels; R^2 is undefined.
class UndefinedVarianceError : public Error {
 public:
  using Error::Error;
};

// NaN gradients during optimization.
class TrainingDivergenceError : public Error {
 public:
  TrainingDivergenceError(const std::string& msg, long step)
      : Error(msg + " (step " + std::to_string(step) + ")"), step_(step) {}
  long step() const { return step_; }

 private:
  long step_ = -1;
};

// Normal-equation system is singular beyond the ridge jitter.
class DegenerateFeaturesError : public Error {
 public:
  using Error::Error;
};

}  // namespace lai
