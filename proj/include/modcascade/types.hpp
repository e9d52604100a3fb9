#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace modcascade {

// Unsafe is the positive class everywhere in this library.
enum class Verdict { Safe, Unsafe };

enum class Recommendation { Block, Review, AllowWithWarning, Allow };

enum class Regime { VisionOnly, Multimodal };

std::string_view to_string(Verdict v);
std::string_view to_string(Recommendation r);
std::string_view to_string(Regime r);

// Parsers accept the spellings produced by to_string (case-insensitive) plus
// snake_case aliases. They throw Error(InvalidArgument) on anything else.
Verdict parse_verdict(std::string_view s);
Recommendation parse_recommendation(std::string_view s);
Regime parse_regime(std::string_view s);

/// Axis-aligned box in normalized [0,1] image coordinates.
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool operator==(const Box&) const = default;
};

struct ImageRef {
  std::string id;
  // Raw bytes for real backends. Replay backends resolve by id only.
  std::optional<std::vector<std::byte>> payload;
};

struct ClassifierOutput {
  double probability = 0.0;  // probability that the image is unsafe

  bool operator==(const ClassifierOutput&) const = default;
};

struct Detection {
  std::string label;
  double confidence = 0.0;
  Box box;

  bool operator==(const Detection&) const = default;
};

struct OcrSpan {
  std::string text;
  Box box;

  bool operator==(const OcrSpan&) const = default;
};

struct ReasonerVerdict {
  Verdict verdict = Verdict::Safe;
  std::string analysis;
  Recommendation recommendation = Recommendation::Allow;

  bool operator==(const ReasonerVerdict&) const = default;
};

// The only thing the Stage-2 reasoner ever sees. Deliberately text-only: there
// is no field that can carry image bytes.
struct ReasonerInput {
  std::vector<std::pair<std::string, double>> object_labels;
  std::vector<std::string> extracted_text;
  double stage1_probability = 0.0;
  std::string rendered_payload;

  bool operator==(const ReasonerInput&) const = default;
};

// Invariant checks. Each throws Error(InvariantViolation) naming the field.
void validate(const Box& box);
void validate(const ClassifierOutput& out);
void validate(const Detection& det);
void validate(const OcrSpan& span);
void validate(const ReasonerVerdict& v);

bool recommendation_allowed(Verdict verdict, Recommendation rec);

}  // namespace modcascade
