#pragma once

#include <stdexcept>
#include <string>

namespace amq {

// Argument outside the operation's domain (ranges, labels, empty inputs).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor shapes that do not chain.
class ShapeError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Settings that cannot be satisfied together.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents (checkpoints, graymaps, CSV).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke an API sequencing rule, e.g. backward on a stale cache.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace amq
