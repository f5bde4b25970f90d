#pragma once

#include <stdexcept>
#include <string>

namespace crossview {

/// Shape or dimension disagreement between tensors/images.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input smaller than an operation requires; message names the offending axis.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint file is unreadable or structurally invalid.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint architecture/resolution does not match what the caller asked for.
class ArchMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// A metric was asked to aggregate over zero elements (e.g. confidence filter
/// removed every row, or no evaluated class is present in the ground truth).
class EmptySetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training hit a non-finite loss; details were dumped to the run log first.
class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The synthetic scene classifier failed its held-out accuracy gate.
class OracleRejectedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace crossview
