#pragma once

#include <stdexcept>
#include <string>

namespace hydro {

/// Invalid configuration value, unknown key, or inconsistent settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data problems: schema mismatch, unparsable rows, too few rows.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf produced or consumed where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Autograd misuse (non-scalar loss, double backward, foreign tensor).
class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Checkpoint or table file that cannot be decoded.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hydro
