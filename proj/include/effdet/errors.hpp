// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace effdet {

// Argument outside an operation's mathematical domain (negative phi, empty
// fusion input, out-of-range pixel offset, degenerate box).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Architecture or run configuration that cannot be realized.
struct ConfigurationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input data: wrong image shape, bad annotation, bad checkpoint.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Accuracy and latency rows that do not line up by architecture key.
struct JoinError : InputError {
  using InputError::InputError;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// External enhancer failed; what() carries the command diagnostics.
struct EnhancementError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace effdet
