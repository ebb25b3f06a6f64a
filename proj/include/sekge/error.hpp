#pragma once

#include <stdexcept>
#include <string>

namespace sekge {

/// Bad input data or a failed runtime check (malformed files, NaN losses,
/// mismatched checkpoints). The CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the command line or configuration (unknown keys, missing
/// required values). The CLI maps these to exit code 1.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operand shapes that do not fit together.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace sekge
