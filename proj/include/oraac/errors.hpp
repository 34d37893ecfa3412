#pragma once

#include <stdexcept>
#include <string>

namespace oraac {

/// Invalid configuration value or shape mismatch.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// An API was called outside its preconditions (empty batch, missing tape, K = 0, ...).
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

/// A nonfinite value reached a place where it must not propagate.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed dataset or checkpoint file.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace oraac
