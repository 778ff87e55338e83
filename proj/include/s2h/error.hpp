#pragma once

#include <stdexcept>
#include <string>

namespace s2h {

/// Error families. The CLI maps each family onto its process exit code.
enum class ErrorKind {
  Config = 1,     // invalid configuration, contract or dimension violation
  Data = 2,       // malformed input, alignment mismatch, i/o failure
  Numeric = 3,    // divergence, non-finite values
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

/// Shape mismatch. Messages name the offending axis.
struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(ErrorKind::Config, "dimension error: " + what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

inline int exit_code(ErrorKind kind) { return static_cast<int>(kind); }

}  // namespace s2h
