#pragma once

#include <stdexcept>
#include <string>

namespace swdnet {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad shapes, invalid hyperparameters, rejected configs.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed dataset files, out-of-range labels.
struct DataError : Error {
  using Error::Error;
};

// API misuse (backward on a foreign tensor, non-scalar loss, ...).
struct UsageError : Error {
  using Error::Error;
};

// Non-finite loss or gradients during training.
struct DivergenceError : Error {
  DivergenceError(const std::string& what, long long step)
      : Error(what), step(step) {}
  long long step;
};

// Structured pruning emptied a layer or coupling group.
struct CollapseError : Error {
  using Error::Error;
};

// Process exit codes used by the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitDivergence = 4,
  kExitCollapse = 5,
};

}  // namespace swdnet
