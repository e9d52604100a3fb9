#pragma once

// Seeded synthesis of a manifest plus replay fixture that realizes target
// confusion matrices, so evaluations can run without licensed image data.
//
// The manifest is split into three disjoint regions: text-only records,
// remaining text+visual records, and records without text. Each model's
// targets (full set, optionally the text+visual and text-only subsets) are
// decomposed over those regions, then predictions are assigned to shuffled
// records. For the cascade, Stage-1 probabilities realize the Stage-1 matrix
// under the routing thresholds and replayed reasoner verdicts realize the
// final matrix.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modcascade/adapters.hpp"
#include "modcascade/metrics.hpp"
#include "modcascade/pipeline.hpp"
#include "modcascade/replay.hpp"
#include "modcascade/subsets.hpp"

namespace modcascade {

struct SubsetTargets {
  ConfusionMatrix full;
  std::optional<ConfusionMatrix> text_visual;
  std::optional<ConfusionMatrix> text_only;
};

struct CascadeSpec {
  std::string vision_only_name = "Cascade Stage 1";
  std::string multimodal_name = "Cascade Stage 1+2";
  std::optional<SubsetTargets> stage1;  // defaults to `final_`
  SubsetTargets final_;
  CallCosts costs;
};

struct BaselineSpec {
  std::string name;
  Regime regime = Regime::VisionOnly;
  double threshold = 0.5;
  double latency_ms = 0.0;
  SubsetTargets targets;
};

struct LabelCounts {
  std::int64_t unsafe = 0;
  std::int64_t safe = 0;
};

struct FixtureSpec {
  std::string name = "synthetic";
  std::uint64_t seed = 1;
  std::string id_prefix = "img";
  Source source = Source::UnsafeBenchSexual;
  LabelCounts text_visual;
  LabelCounts text_only;
  RoutingConfig routing;
  // When false, Stage-1-safe images that stay safe and carry no text get a
  // probability below tau_low and skip Stage 2.
  bool route_all = true;
  CascadeSpec cascade;
  std::vector<BaselineSpec> baselines;
};

struct GeneratedFixture {
  DatasetManifest manifest;
  ReplayData replay;
};

// Throws Error(InvalidArgument) when the targets cannot be realized together
// (class counts disagree, a subset target does not fit inside its parent, or
// the routing band needed for the cascade is empty).
GeneratedFixture generate_fixture(const FixtureSpec& spec);

// JSON form of FixtureSpec; matrices are [tp, fp, tn, fn] arrays. See README.
FixtureSpec parse_fixture_spec(std::string_view json_text);

}  // namespace modcascade
