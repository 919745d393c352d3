#pragma once

#include <stdexcept>
#include <string>

namespace crowdlocal {

/// Raised when two inputs that must share a shape do not.
class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A Gram matrix that cannot be factorized (duplicate key features at r = 0).
class SingularMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ImageIoError : public std::runtime_error {
 public:
  enum class Kind { unreadable, unsupported_format, zero_dimension, unwritable, corrupt };

  ImageIoError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace crowdlocal
