#pragma once

#include <stdexcept>
#include <string>

namespace ebt {

/// Invalid user input: unknown model, bad parameter, malformed configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A function evaluated to a non-finite value where a finite one was required.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problem size exceeds a configured limit.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// A time integration was aborted (non-finite rate, invariant violation).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ebt
