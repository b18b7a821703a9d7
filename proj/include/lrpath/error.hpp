#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lrpath {

enum class ErrorKind {
  InvalidConfig,
  StepOutOfRange,
  UnsupportedKind,
  InvalidSpec,
  AlphaDegenerate,
  PlanViolation,
  InvalidArgument,
  CorpusExhausted,
  DanglingReference,
  DuplicateId,
  MissingCheckpoint,
  IoError,
  SchemaMismatch,
  ShapeMismatch,
  StaleCache,
  NonFiniteUpdate,
  DataExhausted,
  EmptyEval,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::StepOutOfRange: return "StepOutOfRange";
    case ErrorKind::UnsupportedKind: return "UnsupportedKind";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::AlphaDegenerate: return "AlphaDegenerate";
    case ErrorKind::PlanViolation: return "PlanViolation";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::CorpusExhausted: return "CorpusExhausted";
    case ErrorKind::DanglingReference: return "DanglingReference";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::NonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorKind::DataExhausted: return "DataExhausted";
    case ErrorKind::EmptyEval: return "EmptyEval";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

/// Raised by plan validation; remembers which phase broke which rule.
class PlanViolation : public Error {
 public:
  PlanViolation(std::string phase_id, const std::string& reason)
      : Error(ErrorKind::PlanViolation, phase_id + ": " + reason),
        phase_id_(std::move(phase_id)) {}

  const std::string& phase_id() const noexcept { return phase_id_; }

 private:
  std::string phase_id_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace lrpath
