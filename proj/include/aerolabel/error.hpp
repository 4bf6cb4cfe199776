#pragma once

#include <stdexcept>
#include <string>

namespace aerolabel {

// Errors are split by who is at fault so the CLI can map them onto exit codes.

/// Bad or inconsistent configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data that violates a precondition: malformed files, mismatched
/// shapes, out-of-range values (exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or other numerical breakdown (exit code 4).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace aerolabel
