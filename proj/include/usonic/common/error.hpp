#pragma once

#include <stdexcept>
#include <string>

namespace usonic {

// Precondition violations in the signal and model operations throw
// std::invalid_argument or std::out_of_range. The types below cover the
// failures the CLI maps onto distinct exit codes.

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, unreadable, or malformed input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values during training or inference.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace usonic
