#pragma once

// Replay fixtures: deterministic, id-keyed answers for every backend contract,
// plus recorded scores for external models evaluated alongside the cascade.
//
// File format: one JSON object per line. Blank lines and lines starting with
// '#' are ignored. Every object has "kind", "key" and "value":
//
//   {"kind":"header","key":"modcascade-replay","value":{"version":1}}
//   {"kind":"classify","key":"<image id>","value":{"probability":0.97}}
//   {"kind":"detect","key":"<image id>","value":{"detections":[
//       {"label":"exposed_torso","confidence":0.91,"box":[0.1,0.2,0.5,0.9]}]}}
//   {"kind":"ocr","key":"<image id>","value":{"spans":[
//       {"text":"call me","box":[0.1,0.1,0.6,0.2]}]}}
//   {"kind":"reason","key":"<payload hash>","value":{"verdict":"Unsafe",
//       "analysis":"...","recommendation":"Block"}}
//   {"kind":"cascade","key":"cascade","value":{"vision_only_name":"...",
//       "multimodal_name":"...","costs_ms":{"classify":8.2,"detect":3.5,
//       "ocr":20.0,"reason":88.3}}}
//   {"kind":"model","key":"<model name>","value":{"regime":"vision_only",
//       "threshold":0.5,"latency_ms":35}}
//   {"kind":"score","key":"<image id>","model":"<model name>",
//       "value":{"probability":0.83}}
//
// Boxes are [x_min, y_min, x_max, y_max]. The reasoner is keyed on
// payload_hash(rendered_payload). Unknown kinds and unknown fields are
// rejected. Loading is all-or-nothing.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modcascade/adapters.hpp"
#include "modcascade/types.hpp"

namespace modcascade {

inline constexpr std::string_view kReplaySchema = "modcascade-replay";
inline constexpr int kReplayVersion = 1;

// Stable 64-bit FNV-1a digest of the payload, as 16 lowercase hex digits.
std::string payload_hash(std::string_view payload);

// A probability-emitting model evaluated from recorded scores.
struct ExternalModel {
  std::string name;
  Regime regime = Regime::VisionOnly;
  double threshold = 0.5;  // predicted Unsafe iff probability >= threshold
  double latency_ms = 0.0;
  std::map<std::string, double> scores;

  // Throws Error(UnknownImage) if the id has no recorded score.
  double probability(const std::string& image_id) const;
  Verdict predict(const std::string& image_id) const;
};

struct CascadeInfo {
  std::string vision_only_name = "Cascade Stage 1";
  std::string multimodal_name = "Cascade Stage 1+2";
  CallCosts costs;
};

// Raw fixture contents. Immutable once loaded.
struct ReplayData {
  std::map<std::string, ClassifierOutput> classify;
  std::map<std::string, std::vector<Detection>> detect;
  std::map<std::string, std::vector<OcrSpan>> ocr;  // already sorted
  std::map<std::string, ReasonerVerdict> reason;
  std::optional<CascadeInfo> cascade;
  std::vector<ExternalModel> models;  // declaration order

  bool knows_image(const std::string& id) const;
};

struct ReplayBackendSet {
  std::shared_ptr<const ReplayData> data;
  BackendSet backends;

  const CascadeInfo& cascade() const;
  const ExternalModel* find_model(std::string_view name) const;
};

ReplayBackendSet make_replay_backends(ReplayData data);

// Throws Error(ParseError) or Error(InvariantViolation) carrying the 1-based
// line number of the offending row.
ReplayBackendSet load_replay(std::istream& in);
ReplayBackendSet load_replay(const std::filesystem::path& path);

// Serializes in canonical order (header, cascade, models, then per-kind rows
// sorted by key). Parsing the output with load_replay yields equal data.
std::string write_replay(const ReplayData& data);

}  // namespace modcascade
