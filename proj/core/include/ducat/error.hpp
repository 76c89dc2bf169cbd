#pragma once

#include <stdexcept>
#include <string>

namespace ducat {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity reached a checked op boundary.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { io, bad_magic, unsupported_version, truncated, malformed };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Training aborted, e.g. on a non-finite loss.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

}  // namespace ducat
