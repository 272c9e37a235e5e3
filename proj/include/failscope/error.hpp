#pragma once

#include <stdexcept>
#include <string>

namespace failscope {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. `locus` names the line, byte offset or record path.
class ParseError : public Error {
 public:
  ParseError(std::string locus, const std::string& what)
      : Error(locus + ": " + what), locus_(std::move(locus)) {}
  const std::string& locus() const { return locus_; }

 private:
  std::string locus_;
};

class DtypeError : public Error {
 public:
  using Error::Error;
};

class UnknownFeatureError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation does not hold.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Unknown cluster, leaf, tree or report.
class NotFound : public Error {
 public:
  using Error::Error;
};

// Two artifacts that must describe the same dataset do not.
class DatasetMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace failscope
