#pragma once

#include <stdexcept>
#include <string>

namespace vlmpar {

// Error taxonomy. The CLI maps each kind to an exit code.
enum class ErrorKind {
  kDimension,
  kConfig,
  kInput,
  kNumeric,
  kFormat,
  kCacheInvalid,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error(ErrorKind::kDimension, "dimension error: " + what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::kConfig, "configuration error: " + what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what)
      : Error(ErrorKind::kInput, "input error: " + what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::kNumeric, "numeric error: " + what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what)
      : Error(ErrorKind::kFormat, "format error: " + what) {}
};

class CacheInvalidError : public Error {
 public:
  explicit CacheInvalidError(const std::string& what)
      : Error(ErrorKind::kCacheInvalid, "cache invalid: " + what) {}
};

}  // namespace vlmpar
