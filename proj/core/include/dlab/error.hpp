#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dlab {

/// Base class of every exception thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Containers that must align have mismatched dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside its documented domain (temperature, label, fraction...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Geometry too degenerate to continue: coincident centroids, linearly
/// dependent templates, zero covariance.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

/// Malformed binary or text input. offset() is the byte position at which
/// parsing failed.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : Error(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// A root-finding bracket does not contain the requested target.
class BracketError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration. The command line tool maps this to
/// exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem-level failure; the message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dlab
