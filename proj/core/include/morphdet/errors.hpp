#pragma once

#include <stdexcept>
#include <string>

namespace morphdet {

// Invalid function argument (bad sigma, quality out of range, ...).
class InvalidParameterError : public std::invalid_argument {
 public:
  explicit InvalidParameterError(const std::string& what)
      : std::invalid_argument(what) {}
};

// Malformed or unusable input data (too-small image, bad file, ...).
class InvalidInputError : public std::runtime_error {
 public:
  explicit InvalidInputError(const std::string& what)
      : std::runtime_error(what) {}
};

// Tensor shape mismatch; message carries both shapes.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite value where a finite one is required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent configuration (adapter/layer mismatch, contradictory toggles).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// File / stream problems.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace morphdet
