#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "modcascade/adapters.hpp"
#include "modcascade/clock.hpp"
#include "modcascade/types.hpp"

namespace modcascade {

// Version tag of the reasoner payload layout. Bumping it changes every replay
// key, so it is embedded in each decision for auditing.
inline constexpr std::string_view kPayloadTemplateVersion = "reasoner-payload/v1";

struct Stage1Output {
  double probability = 0.0;
  std::vector<Detection> detections;
  double elapsed_ms = 0.0;

  bool operator==(const Stage1Output&) const = default;
};

struct RoutingConfig {
  double tau_low = 0.30;   // below: visually clearly safe
  double tau_high = 0.70;  // at or above: visually unsafe
  bool text_trigger = true;

  bool operator==(const RoutingConfig&) const = default;
};

// Throws Error(InvalidArgument) unless 0 <= tau_low <= tau_high <= 1.
void validate(const RoutingConfig& cfg);

// Routing configuration file, one `key = value` per line; '#' starts a
// comment. Keys: tau_low, tau_high, text_trigger (true/false), regime
// (vision_only/multimodal). Absent keys keep their defaults.
struct RoutingSettings {
  RoutingConfig routing;
  Regime regime = Regime::Multimodal;

  bool operator==(const RoutingSettings&) const = default;
};

// Throws Error(ParseError) with the line number, or Error(InvalidArgument)
// for thresholds that fail validate().
RoutingSettings parse_routing_settings(std::istream& in);
RoutingSettings load_routing_settings(const std::filesystem::path& path);

enum class RoutingReason { ClearlySafeNoText, AmbiguousProbability, UnsafeProbability, TextDetected };

std::string_view to_string(RoutingReason r);

struct RoutingDecision {
  bool invoke_stage2 = false;
  RoutingReason reason = RoutingReason::ClearlySafeNoText;

  bool operator==(const RoutingDecision&) const = default;
};

struct ComponentTimings {
  double stage1_ms = 0.0;
  double ocr_ms = 0.0;
  double reasoner_ms = 0.0;
  double total_ms = 0.0;
};

struct ModerationDecision {
  Verdict final_verdict = Verdict::Safe;
  Stage1Output stage1;
  std::optional<ReasonerVerdict> stage2;
  RoutingDecision routing;
  Recommendation recommendation = Recommendation::Allow;
  ComponentTimings timings;
  std::string template_version{kPayloadTemplateVersion};
};

// Stage 1 on one image: classifier then detector, timed together.
Stage1Output run_stage1(const ImageRef& image, const BackendSet& backends,
                        const Clock& clock = steady_clock());

bool detect_text_presence(const ImageRef& image, const BackendSet& backends);

RoutingDecision route(const Stage1Output& stage1, bool has_text, const RoutingConfig& cfg);

// Renders the text-only payload:
//
//   REASONER PAYLOAD reasoner-payload/v1
//   OBJECTS
//   - person (0.900)
//   - knife (0.400)
//   TEXT
//   - call me
//   - 18+
//   STAGE1_SCORE 0.050000
//
// Objects are sorted by descending confidence (ties by label, then input
// order); text spans keep OCR order. Empty sections keep their heading.
ReasonerInput build_reasoner_input(const Stage1Output& stage1, const std::vector<OcrSpan>& spans);

struct FusedVerdict {
  Verdict verdict = Verdict::Safe;
  Recommendation recommendation = Recommendation::Allow;

  bool operator==(const FusedVerdict&) const = default;
};

// Stage 2, when it ran, decides. Otherwise Unsafe iff p >= tau_high.
// Throws Error(ContractViolation) when stage2 presence disagrees with routing.
FusedVerdict fuse(const Stage1Output& stage1, const RoutingDecision& routing,
                  const std::optional<ReasonerVerdict>& stage2, const RoutingConfig& cfg);

// Full cascade for one image. Backend errors come back as Error tagged with
// the stage that raised them.
ModerationDecision moderate(const ImageRef& image, const BackendSet& backends,
                            const RoutingConfig& cfg, Regime regime,
                            const Clock& clock = steady_clock());

}  // namespace modcascade
