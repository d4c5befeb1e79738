#pragma once

#include <stdexcept>
#include <string>

namespace toilcast {

/// Bad input data, configuration, or shapes. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values, divergence. The CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace toilcast
