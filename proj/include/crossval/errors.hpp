#pragma once

#include <stdexcept>
#include <string>

namespace crossval {

// Error taxonomy mirrors the CLI exit codes: config -> 2, data -> 3,
// numeric -> 4, refused overwrite -> 5.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad or inconsistent input data: malformed files, size violations,
// degenerate sets, undefined metrics.
class DataError : public Error {
 public:
  using Error::Error;
};

// Numerical failures: non-convergence, singular systems, non-PD matrices.
class NumericError : public Error {
 public:
  using Error::Error;
};

class OverwriteError : public Error {
 public:
  using Error::Error;
};

}  // namespace crossval
