#pragma once

#include <stdexcept>
#include <string>

namespace relex {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform, or a checkpoint does not fit a dataset.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A file could not be parsed or is missing required fields.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A file declares a schema/format version this build does not read.
class VersionError : public Error {
 public:
  using Error::Error;
};

// An id (class, predicate, object index) lies outside its vocabulary.
class BoundsError : public Error {
 public:
  using Error::Error;
};

// A referenced visual feature is absent or has the wrong shape.
class MissingFeatureError : public Error {
 public:
  using Error::Error;
};

// A value violates a domain invariant (degenerate box, bad config, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace relex
