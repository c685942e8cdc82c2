#pragma once

#include <stdexcept>
#include <string>

namespace dfi {

// Invalid configuration values (bad field, out-of-range count, unknown enum).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated an operation contract (shape mismatch, disabled task).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File system / decoding failures. The message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged or produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dfi
