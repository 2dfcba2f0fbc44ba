#pragma once

#include <stdexcept>
#include <string>

namespace eoscount {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument or configuration value was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A file could not be found, opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file exists but its content is malformed or inconsistent.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace eoscount
