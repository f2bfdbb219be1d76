#pragma once

#include <stdexcept>
#include <string>

namespace fedbias {

enum class ErrorKind {
  kInvalidArgument,
  kNumeric,
  kSchema,
  kValue,
  kNotFound,
  kConfig,
  kIo,
};

// Base of every error thrown by the library. The kind maps onto the CLI exit
// code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error(ErrorKind::kInvalidArgument, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::kNumeric, what) {}
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what)
      : Error(ErrorKind::kSchema, what) {}
};

class ValueError : public Error {
 public:
  explicit ValueError(const std::string& what)
      : Error(ErrorKind::kValue, what) {}
};

class NotFound : public Error {
 public:
  explicit NotFound(const std::string& what)
      : Error(ErrorKind::kNotFound, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

}  // namespace fedbias
