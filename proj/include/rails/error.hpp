#pragma once

#include <stdexcept>
#include <string>

namespace rails {

// Invalid tunables or inconsistent experiment settings. CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Anything wrong with input data or files. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector/matrix shapes that do not line up.
class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

// Unreadable file: bad magic, truncation, unsupported type codes.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// File parsed but its contents violate an invariant (e.g. unchained layer dims).
class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

namespace detail {

inline void require_config(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace detail
}  // namespace rails
