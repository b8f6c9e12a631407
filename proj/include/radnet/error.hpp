#pragma once

#include <stdexcept>
#include <string>

namespace radnet {

/// Bad configuration or usage (CLI exit code 1).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unreadable, malformed or inconsistent input data (CLI exit code 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure: divergence, non-finite values, failed check (CLI exit code 3).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace radnet
