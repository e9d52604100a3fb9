#include "modcascade/error.hpp"

#include <fmt/core.h>

namespace modcascade {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownImage: return "UnknownImage";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::ContractViolation: return "ContractViolation";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::UndefinedPrecision: return "UndefinedPrecision";
    case ErrorCode::UndefinedRecall: return "UndefinedRecall";
    case ErrorCode::EmptySamples: return "EmptySamples";
    case ErrorCode::RegimeMismatch: return "RegimeMismatch";
    case ErrorCode::SubsetMismatch: return "SubsetMismatch";
    case ErrorCode::NonControlSubset: return "NonControlSubset";
    case ErrorCode::ConcurrentRun: return "ConcurrentRun";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Stage1: return "stage1";
    case Stage::TextProbe: return "text_probe";
    case Stage::Stage2: return "stage2";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

Error::Error(ErrorCode code, const std::string& message, Stage stage)
    : std::runtime_error(message), code_(code), stage_(stage) {}

Error Error::with_stage(Stage stage) const {
  Error e(code_, fmt::format("[{}] {}", to_string(stage), what()), stage);
  e.line_ = line_;
  return e;
}

Error Error::with_line(std::size_t line) const {
  Error e(code_, fmt::format("line {}: {}", line, what()));
  e.stage_ = stage_;
  e.line_ = line;
  return e;
}

}  // namespace modcascade
