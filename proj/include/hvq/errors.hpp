#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hvq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `position` is the 0-based character offset.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& what, std::size_t position)
      : Error(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Evaluation produced a non-finite value or left its mathematical domain.
/// `node` is the flat grid index of the first offending node.
class DomainError : public Error {
 public:
  DomainError(const std::string& what, std::size_t node)
      : Error(what + " at grid index " + std::to_string(node)), node_(node) {}
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

/// Phase could not be made single valued (vortex or phase singularity).
class UnwrapError : public Error {
 public:
  UnwrapError(const std::string& what, std::size_t node)
      : Error(what + " at grid index " + std::to_string(node)), node_(node) {}
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

/// A linear solve or time integration failed numerically.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument combination (grid mismatch, bad parameters, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace hvq
