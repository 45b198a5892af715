#pragma once

#include <stdexcept>
#include <string>

namespace uwsynth {

/// Base of every error raised by the library. The CLI maps subclasses onto
/// exit codes: IoError -> 2, everything else -> 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array or image dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// File missing, unreadable, unwritable or malformed on disk.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Robust estimation could not produce a model (too few or degenerate points).
class EstimationError : public Error {
 public:
  using Error::Error;
};

/// Optimization produced a non-finite value.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Configuration text could not be parsed or failed validation.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace uwsynth
