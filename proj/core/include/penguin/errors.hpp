#pragma once

#include <stdexcept>
#include <string>

namespace penguin {

// Error taxonomy mirrored by the CLI exit codes:
// numeric/assertion -> 1, data -> 2, config -> 3.

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

class DataError : public std::runtime_error {
  public:
    explicit DataError(const std::string& msg) : std::runtime_error("data: " + msg) {}
};

class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric: " + msg) {}
};

// Tensor-level dimension violations. Derives from NumericError so a shape
// mismatch escaping to the CLI maps to the numeric exit code.
class ShapeError : public NumericError {
  public:
    explicit ShapeError(const std::string& msg) : NumericError("shape: " + msg) {}
};

}  // namespace penguin
