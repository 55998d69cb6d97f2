#pragma once

#include <stdexcept>
#include <string>

namespace vitforge {

// Base for all library errors. The CLI maps subtypes to exit codes:
// ConfigError -> 1, DataError (and subtypes) -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or usage: missing directories, invalid hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad input data: undecodable images, malformed files, out-of-range labels.
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized container (checkpoint, manifest).
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// A metric that has no defined value for the given input.
class UndefinedMetricError : public DataError {
 public:
  using DataError::DataError;
};

// Shape contract violation between tensors.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where the contract requires finite ones.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Operation invoked in an invalid order (e.g. backward without forward).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace vitforge
