#pragma once

#include <stdexcept>
#include <string>

namespace mbf {

/// Incompatible tensor or matrix dimensions.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value (dimension 0, rate >= 1, unknown key, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent dataset input.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unparsable file content; message carries the line number.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Index outside its valid range (label, domain, coordinate).
struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Math-domain violation (log of a nonpositive probability).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Probability-matrix constraint violated (row sums or negative entries).
struct ConstraintError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Backward pass through a point where the derivative does not exist.
struct SingularGradientError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Objective evaluated to a non-finite value.
struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training aborted (non-finite loss); message carries the step diagnostics.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Checkpoint file does not match the expected model layout.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mbf
