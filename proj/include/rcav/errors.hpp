#pragma once

#include <stdexcept>
#include <string>

namespace rcav {

// Base for every error raised by the library. The CLI maps each subclass to
// an exit code, see tools/rcav_main.cpp.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// Zero matrices, constant vectors, zero-variance samples, zero gradients.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf observed where the tensor invariant forbids it.
class NumericError : public Error {
 public:
  using Error::Error;
};

// An upstream artifact file or directory is absent.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

// A run directory holds artifacts produced under a different config hash.
class StaleArtifactError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace rcav
