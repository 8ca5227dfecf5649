// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace vct {

// Scalar width is a build-time switch: 32-bit for runs, 64-bit for the
// verification builds that back gradient and formula oracles.
#ifdef VCT_REAL64
using Real = double;
#else
using Real = float;
#endif

// Tensor/operation shape mismatches.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration values; message names the offending field.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Semantically undefined inputs (zero vectors, out-of-range labels, ...).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// API misuse, e.g. backward without an active tape.
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

// File and serialization failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training or adaptation runs that left the healthy regime.
struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Source training ended far below the expected accuracy; almost always a
// misconfiguration (rates, epochs, or data) rather than bad luck.
struct TrainingError : RunError {
  using RunError::RunError;
};

}  // namespace vct
