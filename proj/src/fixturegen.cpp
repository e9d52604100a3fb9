#include "modcascade/fixturegen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <fmt/core.h>
#include <json.hpp>

#include "modcascade/error.hpp"

namespace modcascade {
namespace {

using json = nlohmann::json;

// std::mt19937_64 output is fixed by the standard; distributions are not, so
// draws are derived from raw output to keep fixtures identical everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform integer in [lo, hi].
  std::int64_t uniform(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    const auto limit = std::numeric_limits<std::uint64_t>::max() -
                       std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

constexpr int kRegions = 3;  // text-only, text+visual only, no text

using RegionCounts = std::array<LabelCounts, kRegions>;
using RegionMatrices = std::array<ConfusionMatrix, kRegions>;

Error invalid(const std::string& msg) { return Error(ErrorCode::InvalidArgument, msg); }

bool fits(const ConfusionMatrix& inner, const ConfusionMatrix& outer) {
  return inner.tp <= outer.tp && inner.fp <= outer.fp && inner.tn <= outer.tn &&
         inner.fn <= outer.fn;
}

ConfusionMatrix minus(const ConfusionMatrix& a, const ConfusionMatrix& b) {
  return {a.tp - b.tp, a.fp - b.fp, a.tn - b.tn, a.fn - b.fn};
}

void check_nonnegative(const ConfusionMatrix& m, std::string_view what) {
  if (m.tp < 0 || m.fp < 0 || m.tn < 0 || m.fn < 0) {
    throw invalid(fmt::format("{} has a negative count", what));
  }
}

void check_counts(const ConfusionMatrix& m, const LabelCounts& c, std::string_view what) {
  if (m.positives() != c.unsafe || m.negatives() != c.safe) {
    throw invalid(fmt::format("{} covers {} unsafe / {} safe but the subset has {} / {}", what,
                              m.positives(), m.negatives(), c.unsafe, c.safe));
  }
}

// Picks the portion of `m` that falls on `unsafe` + `safe` records, keeping
// rates as close to proportional as the integer bounds allow.
ConfusionMatrix split(const ConfusionMatrix& m, std::int64_t unsafe, std::int64_t safe,
                      std::string_view what) {
  if (unsafe > m.positives() || safe > m.negatives()) {
    throw invalid(fmt::format("{}: cannot carve {} unsafe / {} safe from {} / {}", what, unsafe,
                              safe, m.positives(), m.negatives()));
  }
  auto pick = [](std::int64_t hits, std::int64_t total, std::int64_t take, std::int64_t misses) {
    if (total == 0) return std::int64_t{0};
    const auto ideal = static_cast<std::int64_t>(
        std::llround(static_cast<double>(hits) * static_cast<double>(take) / static_cast<double>(total)));
    return std::clamp(ideal, std::max<std::int64_t>(0, take - misses), std::min(hits, take));
  };
  ConfusionMatrix out;
  out.tp = pick(m.tp, m.positives(), unsafe, m.fn);
  out.fn = unsafe - out.tp;
  out.fp = pick(m.fp, m.negatives(), safe, m.tn);
  out.tn = safe - out.fp;
  return out;
}

RegionMatrices decompose(const SubsetTargets& t, const RegionCounts& regions,
                         const LabelCounts& tv_counts, const LabelCounts& to_counts,
                         std::string_view model) {
  check_nonnegative(t.full, fmt::format("{} full target", model));
  std::optional<ConfusionMatrix> only = t.text_only;
  if (only) {
    check_nonnegative(*only, fmt::format("{} text-only target", model));
    check_counts(*only, to_counts, fmt::format("{} text-only target", model));
  }
  ConfusionMatrix tv;
  if (t.text_visual) {
    tv = *t.text_visual;
    check_nonnegative(tv, fmt::format("{} text+visual target", model));
    check_counts(tv, tv_counts, fmt::format("{} text+visual target", model));
  } else if (only) {
    tv = *only + split(minus(t.full, *only), regions[1].unsafe, regions[1].safe,
                       fmt::format("{} text+visual", model));
  } else {
    tv = split(t.full, tv_counts.unsafe, tv_counts.safe, fmt::format("{} text+visual", model));
  }
  if (!only) {
    only = split(tv, to_counts.unsafe, to_counts.safe, fmt::format("{} text-only", model));
  }
  if (!fits(*only, tv)) {
    throw invalid(fmt::format("{}: text-only target does not fit inside text+visual", model));
  }
  if (!fits(tv, t.full)) {
    throw invalid(fmt::format("{}: text+visual target does not fit inside the full target", model));
  }
  return {*only, minus(tv, *only), minus(t.full, tv)};
}

struct Slot {
  int region = 0;
  Verdict label = Verdict::Safe;
};

// Per-record predictions for one model: within each (region, label) group the
// first k shuffled records are predicted Unsafe.
std::vector<Verdict> assign(const std::vector<Slot>& slots, const RegionMatrices& m,
                            const std::vector<std::vector<std::size_t>>& group_order) {
  std::vector<Verdict> out(slots.size(), Verdict::Safe);
  for (int r = 0; r < kRegions; ++r) {
    for (int l = 0; l < 2; ++l) {
      const auto& members = group_order[static_cast<std::size_t>(r * 2 + l)];
      const auto k = l == 1 ? m[static_cast<std::size_t>(r)].tp : m[static_cast<std::size_t>(r)].fp;
      for (std::size_t i = 0; i < members.size(); ++i) {
        out[members[i]] = static_cast<std::int64_t>(i) < k ? Verdict::Unsafe : Verdict::Safe;
      }
    }
  }
  return out;
}

double draw(Rng& rng, double lo_inclusive, double hi_exclusive) {
  // Six-decimal grid, matching the precision the payload prints.
  const auto lo = static_cast<std::int64_t>(std::ceil(lo_inclusive * 1e6 - 1e-6));
  auto hi = static_cast<std::int64_t>(std::ceil(hi_exclusive * 1e6 - 1e-6)) - 1;
  if (hi_exclusive > 1.0) hi = 1000000;
  return static_cast<double>(rng.uniform(lo, hi)) / 1e6;
}

const std::vector<std::string> kUnsafeText = {
    "send me your pics", "dm me for private content", "18+ only click here",
    "meet me alone tonight", "don't tell your parents", "nude pics inside"};
const std::vector<std::string> kBenignText = {
    "happy birthday",    "sale 50% off", "welcome to the team",
    "see you at school", "recipe of the day", "weekend vibes"};
const std::vector<std::string> kCaptions = {"lol", "mood", "caption", "follow for more",
                                            "new post", "summer 2023"};

ConfusionMatrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw invalid("confusion matrix must be [tp, fp, tn, fn]");
  }
  return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>(),
          j[3].get<std::int64_t>()};
}

SubsetTargets targets_from_json(const json& j) {
  SubsetTargets t;
  t.full = matrix_from_json(j.at("full"));
  if (j.contains("text_visual")) t.text_visual = matrix_from_json(j.at("text_visual"));
  if (j.contains("text_only")) t.text_only = matrix_from_json(j.at("text_only"));
  return t;
}

LabelCounts counts_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw invalid("subset counts must be [unsafe, safe]");
  return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>()};
}

}  // namespace

GeneratedFixture generate_fixture(const FixtureSpec& spec) {
  validate(spec.routing);
  const auto& cfg = spec.routing;
  const SubsetTargets& final_t = spec.cascade.final_;
  const SubsetTargets& stage1_t = spec.cascade.stage1 ? *spec.cascade.stage1 : final_t;

  const LabelCounts full{final_t.full.positives(), final_t.full.negatives()};
  if (full.unsafe + full.safe <= 0) throw invalid("fixture needs at least one record");
  const auto& tv = spec.text_visual;
  const auto& to = spec.text_only;
  if (to.unsafe > tv.unsafe || to.safe > tv.safe || tv.unsafe > full.unsafe ||
      tv.safe > full.safe || to.unsafe < 0 || to.safe < 0) {
    throw invalid("subset counts must nest: text-only <= text+visual <= full");
  }
  const RegionCounts regions = {LabelCounts{to.unsafe, to.safe},
                                LabelCounts{tv.unsafe - to.unsafe, tv.safe - to.safe},
                                LabelCounts{full.unsafe - tv.unsafe, full.safe - tv.safe}};

  auto decompose_checked = [&](const SubsetTargets& t, std::string_view name) {
    if (t.full.positives() != full.unsafe || t.full.negatives() != full.safe) {
      throw invalid(fmt::format("{} full target has {} unsafe / {} safe, expected {} / {}", name,
                                t.full.positives(), t.full.negatives(), full.unsafe, full.safe));
    }
    return decompose(t, regions, tv, to, name);
  };
  const auto stage1_m = decompose_checked(stage1_t, spec.cascade.vision_only_name);
  const auto final_m = decompose_checked(final_t, spec.cascade.multimodal_name);
  std::vector<RegionMatrices> baseline_m;
  for (const auto& b : spec.baselines) {
    if (!(b.threshold > 0.0 && b.threshold <= 1.0)) {
      throw invalid(fmt::format("{}: threshold must be in (0,1]", b.name));
    }
    baseline_m.push_back(decompose_checked(b.targets, b.name));
  }

  Rng rng(spec.seed);

  // Record layout: shuffle region/label slots, then number them in order.
  std::vector<Slot> slots;
  for (int r = 0; r < kRegions; ++r) {
    for (std::int64_t i = 0; i < regions[static_cast<std::size_t>(r)].unsafe; ++i) {
      slots.push_back({r, Verdict::Unsafe});
    }
    for (std::int64_t i = 0; i < regions[static_cast<std::size_t>(r)].safe; ++i) {
      slots.push_back({r, Verdict::Safe});
    }
  }
  rng.shuffle(slots);

  GeneratedFixture out;
  out.manifest.name = spec.name;
  const int width = std::max<int>(5, static_cast<int>(std::to_string(slots.size()).size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    ImageRecord rec;
    rec.id = fmt::format("{}-{:0{}}", spec.id_prefix, i + 1, width);
    rec.label = slots[i].label;
    rec.text_present = slots[i].region <= 1;
    rec.text_primary = slots[i].region == 0;
    rec.source = spec.source;
    out.manifest.records.push_back(std::move(rec));
  }

  auto group_order = [&] {
    std::vector<std::vector<std::size_t>> groups(kRegions * 2);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      groups[static_cast<std::size_t>(slots[i].region * 2 + (slots[i].label == Verdict::Unsafe))]
          .push_back(i);
    }
    for (auto& g : groups) rng.shuffle(g);
    return groups;
  };

  // Cascade: one ordering shared by both stages maximizes agreement.
  const auto cascade_groups = group_order();
  const auto stage1_pred = assign(slots, stage1_m, cascade_groups);
  const auto final_pred = assign(slots, final_m, cascade_groups);

  if (cfg.tau_low >= cfg.tau_high) {
    throw invalid("fixture generation needs tau_low < tau_high for the ambiguous band");
  }
  ReplayData& replay = out.replay;
  CascadeInfo info;
  info.vision_only_name = spec.cascade.vision_only_name;
  info.multimodal_name = spec.cascade.multimodal_name;
  info.costs = spec.cascade.costs;
  replay.cascade = info;

  std::set<std::string> payloads;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& rec = out.manifest.records[i];
    const bool has_text = rec.text_present;

    std::vector<OcrSpan> spans;
    if (has_text) {
      const auto& pool = rec.text_primary
                             ? (final_pred[i] == Verdict::Unsafe ? kUnsafeText : kBenignText)
                             : kCaptions;
      const auto n = rng.uniform(1, 2);
      for (std::int64_t s = 0; s < n; ++s) {
        const double y = 0.05 + 0.4 * static_cast<double>(s);
        const double x = static_cast<double>(rng.uniform(0, 40)) / 100.0;
        spans.push_back({pool[static_cast<std::size_t>(rng.uniform(0, static_cast<std::int64_t>(pool.size()) - 1))],
                         Box{x, y, x + 0.5, y + 0.1}});
      }
      sort_spans(spans);
    }

    const bool skip = !spec.route_all && !has_text && stage1_pred[i] == Verdict::Safe &&
                      final_pred[i] == Verdict::Safe;
    Stage1Output s1;
    std::vector<Detection> dets;
    std::string payload;
    // Redraw until the reasoner payload is unique so replay keys never clash.
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) throw invalid("could not draw a unique reasoner payload");
      if (stage1_pred[i] == Verdict::Unsafe) {
        s1.probability = draw(rng, cfg.tau_high, 1.0 + 1e-9);
      } else if (skip) {
        s1.probability = draw(rng, 0.0, cfg.tau_low);
      } else {
        s1.probability = draw(rng, cfg.tau_low, cfg.tau_high);
      }
      dets.clear();
      if (stage1_pred[i] == Verdict::Unsafe) {
        dets.push_back({"explicit_content", s1.probability, Box{0.2, 0.2, 0.8, 0.9}});
      }
      if (rng.uniform(0, 1) == 1) {
        dets.push_back({"person", static_cast<double>(rng.uniform(500, 990)) / 1000.0,
                        Box{0.1, 0.1, 0.9, 0.95}});
      }
      s1.detections = dets;
      if (skip) break;
      payload = build_reasoner_input(s1, spans).rendered_payload;
      if (payloads.insert(payload).second) break;
    }

    replay.classify.emplace(rec.id, ClassifierOutput{s1.probability});
    if (!dets.empty()) replay.detect.emplace(rec.id, dets);
    if (!spans.empty()) replay.ocr.emplace(rec.id, spans);
    if (!skip) {
      ReasonerVerdict v;
      v.verdict = final_pred[i];
      if (v.verdict == Verdict::Unsafe) {
        v.recommendation = Recommendation::Block;
        v.analysis = has_text ? "Embedded text and visual signals indicate unsafe content."
                              : "Visual signals indicate unsafe content.";
      } else {
        v.recommendation = Recommendation::Allow;
        v.analysis = "No unsafe visual or textual signals after contextual review.";
      }
      replay.reason.emplace(payload_hash(payload), std::move(v));
    }
  }

  for (std::size_t b = 0; b < spec.baselines.size(); ++b) {
    const auto& bs = spec.baselines[b];
    const auto pred = assign(slots, baseline_m[b], group_order());
    ExternalModel m;
    m.name = bs.name;
    m.regime = bs.regime;
    m.threshold = bs.threshold;
    m.latency_ms = bs.latency_ms;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const double p = pred[i] == Verdict::Unsafe ? draw(rng, bs.threshold, 1.0 + 1e-9)
                                                  : draw(rng, 0.0, bs.threshold);
      m.scores.emplace(out.manifest.records[i].id, p);
    }
    replay.models.push_back(std::move(m));
  }
  return out;
}

FixtureSpec parse_fixture_spec(std::string_view json_text) {
  try {
    const auto j = json::parse(json_text);
    FixtureSpec s;
    s.name = j.value("name", s.name);
    s.seed = j.value("seed", s.seed);
    s.id_prefix = j.value("id_prefix", s.id_prefix);
    if (j.contains("source")) s.source = parse_source(j.at("source").get<std::string>());
    if (j.contains("text_visual")) s.text_visual = counts_from_json(j.at("text_visual"));
    if (j.contains("text_only")) s.text_only = counts_from_json(j.at("text_only"));
    if (j.contains("routing")) {
      const auto& r = j.at("routing");
      s.routing.tau_low = r.value("tau_low", s.routing.tau_low);
      s.routing.tau_high = r.value("tau_high", s.routing.tau_high);
      s.routing.text_trigger = r.value("text_trigger", s.routing.text_trigger);
    }
    s.route_all = j.value("route_all", s.route_all);
    const auto& c = j.at("cascade");
    s.cascade.vision_only_name = c.value("vision_only_name", s.cascade.vision_only_name);
    s.cascade.multimodal_name = c.value("multimodal_name", s.cascade.multimodal_name);
    s.cascade.final_ = targets_from_json(c.at("final"));
    if (c.contains("stage1")) s.cascade.stage1 = targets_from_json(c.at("stage1"));
    if (c.contains("costs_ms")) {
      const auto& k = c.at("costs_ms");
      s.cascade.costs.classify_ms = k.value("classify", 0.0);
      s.cascade.costs.detect_ms = k.value("detect", 0.0);
      s.cascade.costs.extract_text_ms = k.value("ocr", 0.0);
      s.cascade.costs.reason_ms = k.value("reason", 0.0);
    }
    if (j.contains("baselines")) {
      for (const auto& b : j.at("baselines")) {
        BaselineSpec bs;
        bs.name = b.at("name").get<std::string>();
        bs.regime = parse_regime(b.at("regime").get<std::string>());
        bs.threshold = b.value("threshold", bs.threshold);
        bs.latency_ms = b.value("latency_ms", bs.latency_ms);
        bs.targets = targets_from_json(b.at("targets"));
        s.baselines.push_back(std::move(bs));
      }
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, fmt::format("malformed fixture spec: {}", e.what()));
  }
}

}  // namespace modcascade
