#pragma once

#include <stdexcept>
#include <string>

namespace avfusion {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or non-finite input, or a precondition violation.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A mixture model whose parameters break the model invariants.
class InvalidModel : public Error {
 public:
  using Error::Error;
};

/// A least-squares fit without a unique solution.
class DegenerateFit : public Error {
 public:
  using Error::Error;
};

}  // namespace avfusion
