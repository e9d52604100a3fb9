#include "modcascade/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <fmt/core.h>

#include "modcascade/error.hpp"

namespace modcascade {
namespace {

// Runs a backend call, converting failures into stage-tagged errors.
template <typename Fn>
auto staged(Stage stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.stage()) throw;
    throw e.with_stage(stage);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::BackendFailure, e.what()).with_stage(stage);
  }
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

void require(const void* backend, std::string_view what) {
  if (backend == nullptr) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("backend set has no {}", what));
  }
}

}  // namespace

void validate(const RoutingConfig& cfg) {
  const bool ok = std::isfinite(cfg.tau_low) && std::isfinite(cfg.tau_high) &&
                  cfg.tau_low >= 0.0 && cfg.tau_low <= cfg.tau_high && cfg.tau_high <= 1.0;
  if (!ok) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("routing thresholds must satisfy 0 <= tau_low <= tau_high <= 1 "
                            "(got {}, {})",
                            cfg.tau_low, cfg.tau_high));
  }
}

RoutingSettings parse_routing_settings(std::istream& in) {
  RoutingSettings out;
  std::set<std::string> seen;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto key_end = line.find('=');
    const auto key = trim(line.substr(0, key_end));
    if (key.empty() && key_end == std::string::npos) continue;
    auto fail = [n](const std::string& msg) {
      return Error(ErrorCode::ParseError, msg).with_line(n);
    };
    if (key_end == std::string::npos) throw fail(fmt::format("expected key = value, got '{}'", key));
    const auto value = trim(line.substr(key_end + 1));
    if (!seen.insert(key).second) throw fail(fmt::format("duplicate key '{}'", key));
    try {
      if (key == "tau_low" || key == "tau_high") {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        (key == "tau_low" ? out.routing.tau_low : out.routing.tau_high) = v;
      } else if (key == "text_trigger") {
        if (value == "true") {
          out.routing.text_trigger = true;
        } else if (value == "false") {
          out.routing.text_trigger = false;
        } else {
          throw std::invalid_argument(value);
        }
      } else if (key == "regime") {
        out.regime = parse_regime(value);
      } else {
        throw fail(fmt::format("unknown key '{}'", key));
      }
    } catch (const Error& e) {
      if (e.line()) throw;
      throw fail(e.what());
    } catch (const std::exception&) {
      throw fail(fmt::format("bad value '{}' for {}", value, key));
    }
  }
  validate(out.routing);
  return out;
}

RoutingSettings load_routing_settings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open routing config '{}'", path.string()));
  return parse_routing_settings(in);
}

std::string_view to_string(RoutingReason r) {
  switch (r) {
    case RoutingReason::ClearlySafeNoText: return "ClearlySafeNoText";
    case RoutingReason::AmbiguousProbability: return "AmbiguousProbability";
    case RoutingReason::UnsafeProbability: return "UnsafeProbability";
    case RoutingReason::TextDetected: return "TextDetected";
  }
  return "ClearlySafeNoText";
}

Stage1Output run_stage1(const ImageRef& image, const BackendSet& backends, const Clock& clock) {
  require(backends.classifier.get(), "classifier");
  require(backends.detector.get(), "detector");
  const auto start = clock.now();
  Stage1Output out;
  out.probability = staged(Stage::Stage1, [&] {
    auto c = backends.classifier->classify(image);
    validate(c);
    return c.probability;
  });
  out.detections = staged(Stage::Stage1, [&] {
    auto dets = backends.detector->detect(image);
    for (const auto& d : dets) validate(d);
    return dets;
  });
  out.elapsed_ms = to_ms(clock.now() - start);
  return out;
}

bool detect_text_presence(const ImageRef& image, const BackendSet& backends) {
  require(backends.text_extractor.get(), "text extractor");
  return staged(Stage::TextProbe, [&] { return !backends.text_extractor->extract_text(image).empty(); });
}

RoutingDecision route(const Stage1Output& stage1, bool has_text, const RoutingConfig& cfg) {
  const double p = stage1.probability;
  if (has_text && cfg.text_trigger) return {true, RoutingReason::TextDetected};
  if (p >= cfg.tau_high) return {true, RoutingReason::UnsafeProbability};
  if (p >= cfg.tau_low) return {true, RoutingReason::AmbiguousProbability};
  return {false, RoutingReason::ClearlySafeNoText};
}

ReasonerInput build_reasoner_input(const Stage1Output& stage1, const std::vector<OcrSpan>& spans) {
  ReasonerInput in;
  in.stage1_probability = stage1.probability;
  in.object_labels.reserve(stage1.detections.size());
  for (const auto& d : stage1.detections) in.object_labels.emplace_back(d.label, d.confidence);
  std::stable_sort(in.object_labels.begin(), in.object_labels.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  in.extracted_text.reserve(spans.size());
  for (const auto& s : spans) in.extracted_text.push_back(s.text);

  std::string payload = fmt::format("REASONER PAYLOAD {}\nOBJECTS\n", kPayloadTemplateVersion);
  for (const auto& [label, confidence] : in.object_labels) {
    payload += fmt::format("- {} ({:.3f})\n", label, confidence);
  }
  payload += "TEXT\n";
  for (const auto& text : in.extracted_text) {
    payload += "- ";
    payload += text;
    payload += '\n';
  }
  payload += fmt::format("STAGE1_SCORE {:.6f}\n", stage1.probability);
  in.rendered_payload = std::move(payload);
  return in;
}

FusedVerdict fuse(const Stage1Output& stage1, const RoutingDecision& routing,
                  const std::optional<ReasonerVerdict>& stage2, const RoutingConfig& cfg) {
  if (stage2.has_value() != routing.invoke_stage2) {
    throw Error(ErrorCode::ContractViolation,
                stage2 ? "stage 2 verdict present although routing skipped stage 2"
                       : "routing invoked stage 2 but no stage 2 verdict was supplied");
  }
  if (stage2) return {stage2->verdict, stage2->recommendation};
  if (stage1.probability >= cfg.tau_high) return {Verdict::Unsafe, Recommendation::Block};
  return {Verdict::Safe, Recommendation::Allow};
}

ModerationDecision moderate(const ImageRef& image, const BackendSet& backends,
                            const RoutingConfig& cfg, Regime regime, const Clock& clock) {
  validate(cfg);
  const auto start = clock.now();
  ModerationDecision d;
  d.stage1 = run_stage1(image, backends, clock);
  d.timings.stage1_ms = d.stage1.elapsed_ms;

  if (regime == Regime::VisionOnly) {
    d.routing = {false, RoutingReason::ClearlySafeNoText};
  } else {
    require(backends.text_extractor.get(), "text extractor");
    require(backends.reasoner.get(), "reasoner");
    std::optional<std::vector<OcrSpan>> spans;
    auto run_ocr = [&] {
      const auto t0 = clock.now();
      spans = staged(Stage::TextProbe, [&] {
        auto s = backends.text_extractor->extract_text(image);
        for (const auto& span : s) validate(span);
        sort_spans(s);
        return s;
      });
      d.timings.ocr_ms = to_ms(clock.now() - t0);
    };
    // The probe runs before routing so visually safe images with text still
    // reach Stage 2; its spans are reused for the payload.
    if (cfg.text_trigger) run_ocr();
    d.routing = route(d.stage1, spans && !spans->empty(), cfg);
    if (d.routing.invoke_stage2) {
      if (!spans) run_ocr();
      const auto input = build_reasoner_input(d.stage1, *spans);
      const auto t0 = clock.now();
      d.stage2 = staged(Stage::Stage2, [&] {
        auto v = backends.reasoner->reason(input);
        try {
          validate(v);
        } catch (const Error& e) {
          throw Error(ErrorCode::MalformedResponse, e.what());
        }
        return v;
      });
      d.timings.reasoner_ms = to_ms(clock.now() - t0);
    }
  }

  const auto fused = fuse(d.stage1, d.routing, d.stage2, cfg);
  d.final_verdict = fused.verdict;
  d.recommendation = fused.recommendation;
  d.timings.total_ms = to_ms(clock.now() - start);
  return d;
}

}  // namespace modcascade
