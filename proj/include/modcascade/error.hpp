#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace modcascade {

enum class ErrorCode {
  InvalidArgument,
  ParseError,
  InvariantViolation,
  DuplicateId,
  UnknownImage,
  BackendFailure,
  MalformedResponse,
  ContractViolation,
  EmptyMatrix,
  UndefinedPrecision,
  UndefinedRecall,
  EmptySamples,
  RegimeMismatch,
  SubsetMismatch,
  NonControlSubset,
  ConcurrentRun,
  Io,
};

std::string_view to_string(ErrorCode code);

// Which part of the cascade raised an error. Absent for errors that do not
// come from a pipeline run.
enum class Stage { Stage1, TextProbe, Stage2 };

std::string_view to_string(Stage stage);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  Error(ErrorCode code, const std::string& message, Stage stage);

  ErrorCode code() const noexcept { return code_; }
  const std::optional<Stage>& stage() const noexcept { return stage_; }
  // 1-based line of the offending input row, when the error came from a file.
  const std::optional<std::size_t>& line() const noexcept { return line_; }

  Error with_stage(Stage stage) const;
  Error with_line(std::size_t line) const;

 private:
  ErrorCode code_;
  std::optional<Stage> stage_;
  std::optional<std::size_t> line_;
};

}  // namespace modcascade
