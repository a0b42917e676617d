#pragma once

#include <stdexcept>
#include <string>

namespace arrayloc {

/// Precondition violated by the caller (bad dimensions, non-unit vectors,
/// unsupported options).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An observation does not carry every array a fitted map depends on.
class ActiveSetMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An observation has no active arrays at all.
class NoObservation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data (files, wire lines, model dumps).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace arrayloc
