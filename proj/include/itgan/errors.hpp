#pragma once

#include <stdexcept>
#include <string>

namespace itgan {

/// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value outside an operation's domain (negative stride, bad label, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Object is in the wrong state for the request (missing gradient, no model).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite value detected during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input text or file could not be parsed.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally valid text in an unsupported layout (wrong attribute count).
class FormatError : public ParseError {
 public:
  using ParseError::ParseError;
};

/// File-level I/O failure: missing file, unreadable image, short write.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace itgan
