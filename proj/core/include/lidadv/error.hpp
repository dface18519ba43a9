#pragma once

#include <stdexcept>
#include <string>

namespace lidadv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Arguments violate an operation's precondition.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// All k neighbor distances are equal, so the LID estimate is undefined.
class DegenerateNeighborhoodError : public Error {
 public:
  using Error::Error;
};

/// A zero neighbor distance (query coincides with a reference point).
class DuplicatePointError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (IDX, weight container, CSV).
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lidadv
