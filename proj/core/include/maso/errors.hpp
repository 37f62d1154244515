#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace maso {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the domain an operation accepts.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition (e.g. a bias or orthogonality condition) is violated.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The input sits too close to a region boundary to decide a code.
class AmbiguityError : public Error {
 public:
  using Error::Error;
};

/// The network does not have the structure an analysis requires.
class StructureError : public Error {
 public:
  using Error::Error;
};

/// Rank deficiency during orthogonalization.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Apodization window does not give unit coverage.
class WindowError : public Error {
 public:
  using Error::Error;
};

/// Network document does not match the schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Malformed CSV input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace maso
