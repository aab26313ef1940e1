#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace toon2real {

// Error categories double as the machine-parsable tag printed by the CLI.
enum class ErrorCategory {
  NotFound,
  DecodeError,
  InvalidImage,
  RangeError,
  ShapeError,
  InvalidAnnotation,
  DuplicateId,
  EmptyCorpus,
  CorpusError,
  DivergenceError,
  ZeroVectorError,
  AdapterContractError,
  SchemaError,
  UnknownExperiment,
  ConfigError,
  IoError,
  UsageError,
};

constexpr std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::NotFound: return "NotFound";
    case ErrorCategory::DecodeError: return "DecodeError";
    case ErrorCategory::InvalidImage: return "InvalidImage";
    case ErrorCategory::RangeError: return "RangeError";
    case ErrorCategory::ShapeError: return "ShapeError";
    case ErrorCategory::InvalidAnnotation: return "InvalidAnnotation";
    case ErrorCategory::DuplicateId: return "DuplicateId";
    case ErrorCategory::EmptyCorpus: return "EmptyCorpus";
    case ErrorCategory::CorpusError: return "CorpusError";
    case ErrorCategory::DivergenceError: return "DivergenceError";
    case ErrorCategory::ZeroVectorError: return "ZeroVectorError";
    case ErrorCategory::AdapterContractError: return "AdapterContractError";
    case ErrorCategory::SchemaError: return "SchemaError";
    case ErrorCategory::UnknownExperiment: return "UnknownExperiment";
    case ErrorCategory::ConfigError: return "ConfigError";
    case ErrorCategory::IoError: return "IoError";
    case ErrorCategory::UsageError: return "UsageError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace toon2real
