#pragma once

#include <stdexcept>
#include <string>

namespace rpfslu {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
struct DimensionError : Error {
  using Error::Error;
};

/// A caller broke an operation's precondition.
struct ContractError : Error {
  using Error::Error;
};

/// Malformed or inconsistent input data (corpus files, checkpoints, tags).
struct DataError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

/// Training diverged; the message carries epoch/turn coordinates.
struct TrainingError : Error {
  using Error::Error;
};

}  // namespace rpfslu
