#pragma once

#include <stdexcept>
#include <string>

namespace decaf {

// Error families. Each maps onto one CLI exit code (see tools/decaf_cli.cpp).

/// Tensor shapes disagree; the message names the offending axis.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition of an operation was violated.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Invalid user-supplied configuration (band edges, head counts, config keys).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated container / checkpoint / manifest file.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values or an ill-posed linear system.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace decaf
