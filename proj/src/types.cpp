#include "modcascade/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <fmt/core.h>

#include "modcascade/error.hpp"

namespace modcascade {
namespace {

std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '_' || c == '-' || c == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

bool in_unit(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

std::string_view to_string(Verdict v) {
  return v == Verdict::Unsafe ? "Unsafe" : "Safe";
}

std::string_view to_string(Recommendation r) {
  switch (r) {
    case Recommendation::Block: return "Block";
    case Recommendation::Review: return "Review";
    case Recommendation::AllowWithWarning: return "AllowWithWarning";
    case Recommendation::Allow: return "Allow";
  }
  return "Allow";
}

std::string_view to_string(Regime r) {
  return r == Regime::VisionOnly ? "vision_only" : "multimodal";
}

Verdict parse_verdict(std::string_view s) {
  const auto n = normalize(s);
  if (n == "safe") return Verdict::Safe;
  if (n == "unsafe") return Verdict::Unsafe;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown verdict '{}'", s));
}

Recommendation parse_recommendation(std::string_view s) {
  const auto n = normalize(s);
  if (n == "block") return Recommendation::Block;
  if (n == "review") return Recommendation::Review;
  if (n == "allowwithwarning") return Recommendation::AllowWithWarning;
  if (n == "allow") return Recommendation::Allow;
  throw Error(ErrorCode::InvalidArgument,
              fmt::format("unknown recommendation '{}'", s));
}

Regime parse_regime(std::string_view s) {
  const auto n = normalize(s);
  if (n == "visiononly" || n == "vision" || n == "regime1") return Regime::VisionOnly;
  if (n == "multimodal" || n == "regime2") return Regime::Multimodal;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown regime '{}'", s));
}

void validate(const Box& b) {
  for (double v : {b.x_min, b.y_min, b.x_max, b.y_max}) {
    if (!in_unit(v)) {
      throw Error(ErrorCode::InvariantViolation,
                  fmt::format("box coordinate {} outside [0,1]", v));
    }
  }
  if (b.x_min > b.x_max) {
    throw Error(ErrorCode::InvariantViolation,
                fmt::format("box x_min {} > x_max {}", b.x_min, b.x_max));
  }
  if (b.y_min > b.y_max) {
    throw Error(ErrorCode::InvariantViolation,
                fmt::format("box y_min {} > y_max {}", b.y_min, b.y_max));
  }
}

void validate(const ClassifierOutput& out) {
  if (!in_unit(out.probability)) {
    throw Error(ErrorCode::InvariantViolation,
                fmt::format("probability {} outside [0,1]", out.probability));
  }
}

void validate(const Detection& det) {
  if (det.label.empty()) {
    throw Error(ErrorCode::InvariantViolation, "detection label is empty");
  }
  if (!in_unit(det.confidence)) {
    throw Error(ErrorCode::InvariantViolation,
                fmt::format("detection confidence {} outside [0,1]", det.confidence));
  }
  validate(det.box);
}

void validate(const OcrSpan& span) {
  if (is_blank(span.text)) {
    throw Error(ErrorCode::InvariantViolation, "OCR span text is blank");
  }
  validate(span.box);
}

bool recommendation_allowed(Verdict verdict, Recommendation rec) {
  if (verdict == Verdict::Unsafe) {
    return rec == Recommendation::Block || rec == Recommendation::Review;
  }
  return rec != Recommendation::Block;
}

void validate(const ReasonerVerdict& v) {
  if (is_blank(v.analysis)) {
    throw Error(ErrorCode::InvariantViolation, "reasoner analysis is empty");
  }
  if (!recommendation_allowed(v.verdict, v.recommendation)) {
    throw Error(ErrorCode::InvariantViolation,
                fmt::format("recommendation {} not allowed for verdict {}",
                            to_string(v.recommendation), to_string(v.verdict)));
  }
}

}  // namespace modcascade
