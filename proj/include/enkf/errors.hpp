#pragma once

#include <stdexcept>
#include <string>

namespace enkf {

/// Invalid input shapes, indices or parameters passed to a library call.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed (factorization, non-PSD matrix, singular system).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Experiment configuration rejected before any computation started.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace enkf
