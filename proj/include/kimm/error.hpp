#pragma once

#include <stdexcept>
#include <string>

namespace kimm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, malformed content, violated preconditions.
/// The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written. CLI exit code 2.
class IoError : public Error {
 public:
  using Error::Error;
};

// Binary store / checkpoint decoding failures. Each is a distinct type so
// callers (and the fuzz tests) can tell them apart.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class MagicMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};
class DimMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncatedPayload : public FormatError {
 public:
  using FormatError::FormatError;
};
class DuplicateName : public FormatError {
 public:
  using FormatError::FormatError;
};
class NonFiniteValue : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace kimm
