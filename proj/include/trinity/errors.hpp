#pragma once

#include <stdexcept>
#include <string>

namespace trinity {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A frequency index or array position outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Malformed numeric input: wrong shape, non-finite values, bad parameter.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an API contract (e.g. mixing DCT conventions).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or unsupported configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A configured encoder or caption backend cannot be reached.
class EncoderUnavailable : public Error {
 public:
  using Error::Error;
};

/// Dataset-level failure: manifest schema, missing files, undecodable images.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace trinity
