#pragma once

#include <stdexcept>
#include <string>

namespace ptd {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, arguments, or architecture description.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor or architecture shapes that do not chain.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Unreadable or malformed input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

class CountMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class VersionError : public DataError {
 public:
  using DataError::DataError;
};

class ManifestError : public DataError {
 public:
  using DataError::DataError;
};

/// NaN/Inf showed up in an activation, loss, or update.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ptd
