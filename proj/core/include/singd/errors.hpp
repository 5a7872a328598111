#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace singd {

/// Dimension mismatch between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition on values (not shapes) was violated.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Matrix is singular within the pivot tolerance.
class SingularError : public std::runtime_error {
 public:
  SingularError(std::size_t pivot_index, const std::string& what)
      : std::runtime_error(what), pivot_index_(pivot_index) {}

  /// Index of the elimination step whose pivot fell below tolerance.
  std::size_t pivot_index() const { return pivot_index_; }

 private:
  std::size_t pivot_index_;
};

/// Malformed configuration file or CLI usage.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace singd
