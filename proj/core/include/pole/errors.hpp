#pragma once

#include <stdexcept>
#include <string>

namespace pole {

// Error taxonomy mirrored by the CLI exit path: every failure surfaces as a
// single stderr line "error[<category>]: <message>".
enum class ErrorCategory { Config, Io, Contract, Numeric, Internal };

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Contract: return "contract";
    case ErrorCategory::Numeric: return "numeric";
    case ErrorCategory::Internal: return "internal";
  }
  return "internal";
}

class PoleError : public std::runtime_error {
 public:
  PoleError(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public PoleError {
 public:
  explicit ConfigError(const std::string& message)
      : PoleError(ErrorCategory::Config, message) {}
};

class IoError : public PoleError {
 public:
  explicit IoError(const std::string& message)
      : PoleError(ErrorCategory::Io, message) {}
};

class ContractError : public PoleError {
 public:
  explicit ContractError(const std::string& message)
      : PoleError(ErrorCategory::Contract, message) {}
};

class NumericError : public PoleError {
 public:
  explicit NumericError(const std::string& message)
      : PoleError(ErrorCategory::Numeric, message) {}
};

}  // namespace pole
