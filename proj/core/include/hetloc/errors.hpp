#pragma once

#include <stdexcept>
#include <string>

namespace hetloc {

/// Caller passed a value that violates an operation's precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent configuration: mismatched layer shapes, grids, inventories, modes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named entity (model head, device, tower) not registered.
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hetloc
