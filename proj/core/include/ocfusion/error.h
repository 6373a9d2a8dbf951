#pragma once

#include <stdexcept>
#include <string>

namespace ocfusion {

/// Error categories. The numeric values double as process exit codes for the
/// command-line tool.
enum class ErrorKind : int {
  kUsage = 2,
  kData = 3,
  kContract = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Bad flag or parameter value supplied by the caller.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

/// Malformed or invariant-violating data (grid mismatch, parse failure, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class DimensionError : public DataError {
 public:
  explicit DimensionError(const std::string& what) : DataError(what) {}
};

/// A component broke its behavioral contract, e.g. an occlusion predictor
/// answering the same value for (i, j) and (j, i).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what)
      : Error(ErrorKind::kContract, what) {}
};

}  // namespace ocfusion
