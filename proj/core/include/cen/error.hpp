// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cen {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or channel counts disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a precondition (label range, degenerate sizes, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model, plan or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of an API contract (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or truncated binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Config text could not be parsed; carries the offending line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace cen
