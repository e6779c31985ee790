#pragma once

#include <stdexcept>
#include <string>

namespace fema {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values or malformed config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Mismatched widths between vectors, matrices or networks.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An API used out of contract (stale cache, malformed episode, empty batch).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or incompatible binary files.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Memory records and embedding parameters from different generations.
class CoherenceError : public Error {
 public:
  using Error::Error;
};

/// Invalid policy output (negative or non-finite standard deviation).
class PolicyError : public Error {
 public:
  using Error::Error;
};

/// Environment fault during a rollout.
class RunError : public Error {
 public:
  using Error::Error;
};

}  // namespace fema
