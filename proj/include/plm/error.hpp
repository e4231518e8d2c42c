#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace plm {

/// Root of the library's exception hierarchy. The CLI maps each subclass to
/// a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes do not line up for the requested operation.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// NaN/Inf where a finite value is required, or an undefined ratio.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input data (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
  DataError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what) {}
};

}  // namespace plm
