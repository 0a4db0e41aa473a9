#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace echoef {

/// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed data that violates an operation's precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A configuration value or combination is not allowed.
class InvalidConfig : public Error {
 public:
  using Error::Error;
};

/// An EF label outside [0,100].
class InvalidLabel : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// The requested operation is not defined for this model variant.
class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

/// A training or I/O step failed at runtime.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data; carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace echoef
