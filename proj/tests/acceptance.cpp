// One line per acceptance criterion; exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <unistd.h>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/core.h>
#include <httplib.h>
#include <json.hpp>

#include "modcascade/bench.hpp"
#include "modcascade/evalrunner.hpp"
#include "modcascade/fixturegen.hpp"
#include "modcascade/metrics.hpp"
#include "modcascade/pipeline.hpp"
#include "modcascade/service.hpp"

using namespace modcascade;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string data_path(const std::string& name) { return std::string(MODCASCADE_TEST_DATA_DIR) + "/" + name; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FixtureSpec load_spec(const std::string& name) { return parse_fixture_spec(read_file(data_path(name))); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failures without stopping at the first one.
class Checker {
 public:
  void expect(bool cond, const std::string& what) {
    ++checks_;
    if (!cond && first_.empty()) first_ = what;
    if (!cond) ++failures_;
  }
  Outcome done(const std::string& summary) const {
    if (failures_ == 0) return {true, fmt::format("{} ({} checks)", summary, checks_)};
    return {false, fmt::format("{} of {} checks failed; first: {}", failures_, checks_, first_)};
  }

 private:
  int checks_ = 0;
  int failures_ = 0;
  std::string first_;
};

std::string fmt_metrics(const ReportMetrics& m) {
  auto o = [](const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : "n/a"; };
  return fmt::format("acc {:.2f} f1 {} p {} r {}", m.accuracy, o(m.f1), o(m.precision), o(m.recall));
}

struct World {
  GeneratedFixture generated;
  ReplayBackendSet replay;
};

const World& benchmark() {
  static const World w = [] {
    auto g = generate_fixture(load_spec("benchmark_spec.json"));
    auto r = make_replay_backends(g.replay);
    return World{std::move(g), std::move(r)};
  }();
  return w;
}

const EvalReport* find(const std::vector<EvalReport>& reports, const std::string& name) {
  for (const auto& r : reports) {
    if (r.model == name) return &r;
  }
  return nullptr;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

struct Published {
  const char* model;
  Regime regime;
  ReportMetrics metrics;  // accuracy, precision, recall, f1
};

Outcome full_set_reproduction() {
  const auto t0 = std::chrono::steady_clock::now();
  const Published rows[] = {
      {"Cascade Stage 1", Regime::VisionOnly, {80.27, 82.05, 89.02, 85.39}},
      {"FalconsAI", Regime::VisionOnly, {59.01, 91.15, 40.70, 56.28}},
      {"NudeNet", Regime::VisionOnly, {68.03, 73.96, 78.18, 76.01}},
      {"Adam-ViT", Regime::VisionOnly, {68.98, 81.23, 67.79, 73.90}},
      {"Freepik", Regime::VisionOnly, {77.04, 86.81, 76.13, 81.12}},
      {"Cascade Stage 1+2", Regime::Multimodal, {81.40, 83.22, 89.31, 86.16}},
      {"LlavaGuard", Regime::Multimodal, {80.36, 86.17, 83.02, 84.56}},
  };
  const ConfusionMatrix matrices[] = {{608, 133, 238, 75}, {278, 27, 344, 405}, {534, 188, 183, 149},
                                      {463, 107, 264, 220}, {520, 79, 292, 163}, {610, 123, 248, 73},
                                      {567, 91, 280, 116}};
  Checker c;
  const auto& w = benchmark();
  std::vector<EvalReport> all;
  for (auto regime : {Regime::VisionOnly, Regime::Multimodal}) {
    const auto out = run_eval(build_suite(w.replay, regime, RoutingConfig{}, true), w.generated.manifest,
                              SubsetKind::Full, regime);
    c.expect(out.failures.empty(), "no model failures");
    all.insert(all.end(), out.reports.begin(), out.reports.end());
  }
  for (std::size_t i = 0; i < std::size(rows); ++i) {
    const auto* r = find(all, rows[i].model);
    c.expect(r != nullptr, fmt::format("report for {}", rows[i].model));
    if (!r) continue;
    c.expect(r->confusion == matrices[i], fmt::format("{} confusion", rows[i].model));
    c.expect(r->metrics == rows[i].metrics,
             fmt::format("{}: got {}, published {}", rows[i].model, fmt_metrics(r->metrics),
                         fmt_metrics(rows[i].metrics)));
    // The emitted table must show the same numbers.
    ReportBundle b;
    b.reports = {*r};
    const auto table = emit_report(b, ReportFormat::TableText);
    c.expect(table.find(fmt::format("{:.2f}", rows[i].metrics.accuracy)) != std::string::npos,
             fmt::format("{} accuracy printed", rows[i].model));
  }
  const auto sg = derive_confusion(683, 371, MetricQuery{64.80, 64.96, 93.56, 76.68});
  c.expect(sg.status == DerivationStatus::Infeasible, "ShieldGemma-2 full row infeasible");
  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, fmt::format("runtime {:.2f}s under 10s", secs));
  return c.done(fmt::format("7 rows exact, ShieldGemma-2 row {}, {:.2f}s", to_string(sg.status), secs));
}

Outcome stage2_delta_row() {
  Checker c;
  const auto& w = benchmark();
  const auto v = run_eval(build_suite(w.replay, Regime::VisionOnly, RoutingConfig{}, true),
                          w.generated.manifest, SubsetKind::Full, Regime::VisionOnly);
  const auto m = run_eval(build_suite(w.replay, Regime::Multimodal, RoutingConfig{}, true),
                          w.generated.manifest, SubsetKind::Full, Regime::Multimodal);
  const auto* s1 = find(v.reports, "Cascade Stage 1");
  const auto* s12 = find(m.reports, "Cascade Stage 1+2");
  if (!s1 || !s12) return {false, "cascade reports missing"};
  c.expect(std::abs(s1->latency.mean_ms - 11.7) < 1e-9, fmt::format("stage 1 latency {}", s1->latency.mean_ms));
  c.expect(std::abs(s12->latency.mean_ms - 120.0) < 1e-9, fmt::format("full latency {}", s12->latency.mean_ms));
  const auto d = stage2_delta(*s1, *s12);
  c.expect(d.d_accuracy == 1.13, "d_accuracy +1.13");
  c.expect(d.d_f1 == 0.77, "d_f1 +0.77");
  c.expect(d.d_precision == 1.17, "d_precision +1.17");
  c.expect(d.d_recall == 0.29, "d_recall +0.29");
  c.expect(std::abs(d.d_latency_ms - 108.3) <= 0.1, fmt::format("d_latency {}", d.d_latency_ms));
  return c.done(fmt::format("delta ({:+.2f}, {:+.2f}, {:+.2f}, {:+.2f}) and {:+.1f} ms", *d.d_accuracy, *d.d_f1,
                            *d.d_precision, *d.d_recall, d.d_latency_ms));
}

Outcome text_subsets() {
  Checker c;
  const auto& w = benchmark();
  const auto suite = build_suite(w.replay, Regime::Multimodal, RoutingConfig{}, true);
  const auto text_only = run_eval(suite, w.generated.manifest, SubsetKind::TextOnly, Regime::Multimodal);
  const Published rows[] = {
      {"Cascade Stage 1+2", Regime::Multimodal, {81.82, 75.76, 100.00, 86.21}},
      {"ShieldGemma-2", Regime::Multimodal, {59.09, 60.00, 84.00, 70.00}},
      {"LlavaGuard", Regime::Multimodal, {59.09, 66.67, 56.00, 60.87}},
  };
  const ConfusionMatrix matrices[] = {{25, 8, 11, 0}, {21, 14, 5, 4}, {14, 7, 12, 11}};
  for (std::size_t i = 0; i < std::size(rows); ++i) {
    const auto* r = find(text_only.reports, rows[i].model);
    c.expect(r != nullptr, fmt::format("text-only report for {}", rows[i].model));
    if (!r) continue;
    c.expect(r->confusion.total() == 44, "text-only subset has 44 images");
    c.expect(r->confusion == matrices[i], fmt::format("{} text-only confusion", rows[i].model));
    c.expect(r->metrics == rows[i].metrics,
             fmt::format("{}: got {}, published {}", rows[i].model, fmt_metrics(r->metrics),
                         fmt_metrics(rows[i].metrics)));
  }

  const auto tv = run_eval(suite, w.generated.manifest, SubsetKind::TextVisual, Regime::Multimodal);
  const auto* cascade = find(tv.reports, "Cascade Stage 1+2");
  c.expect(cascade != nullptr, "text+visual cascade report");
  if (cascade) {
    c.expect(cascade->confusion == ConfusionMatrix{140, 34, 68, 15}, "text+visual forced matrix");
    c.expect(cascade->metrics.precision == 80.46, "text+visual precision 80.46");
    c.expect(cascade->metrics.recall == 90.32, "text+visual recall 90.32");
    c.expect(cascade->metrics.f1 == 85.11, "text+visual F1 85.11");
  }
  const auto flag = derive_confusion(155, 102, MetricQuery{81.08, 80.46, 90.32, 85.11});
  c.expect(flag.status == DerivationStatus::Infeasible, "published text+visual accuracy flagged Infeasible");
  return c.done(fmt::format("12 text-only values exact; text+visual P/R/F1 exact, accuracy {:.2f} vs 81.08 {}",
                            cascade ? cascade->metrics.accuracy : 0.0, to_string(flag.status)));
}

Outcome pareto() {
  const std::vector<ParetoPoint> points = {
      {"Cascade Stage 1", 11.7, 80.27},  {"Cascade Stage 1+2", 120.0, 81.40}, {"FalconsAI", 7.3, 59.01},
      {"NudeNet", 35.0, 68.03},          {"Adam-ViT", 7.2, 68.98},            {"Freepik", 15.5, 77.04},
      {"ShieldGemma-2", 1136.0, 64.23},  {"LlavaGuard", 4138.0, 80.36},
  };
  const auto front = pareto_frontier(points);
  std::vector<std::string> names;
  for (const auto& p : front) names.push_back(p.name);
  const std::vector<std::string> expected = {"Adam-ViT", "Cascade Stage 1", "Cascade Stage 1+2"};
  std::string joined;
  for (const auto& n : names) joined += (joined.empty() ? "" : ", ") + n;
  return {names == expected, fmt::format("frontier {{{}}}", joined)};
}

// Classifier reading the probability from the image id.
class IdProbability final : public Classifier {
 public:
  ClassifierOutput classify(const ImageRef& image) const override { return {std::stod(image.id.substr(2))}; }
};

// OCR reports text when the id starts with "t".
class IdText final : public TextExtractor {
 public:
  std::vector<OcrSpan> extract_text(const ImageRef& image) const override {
    if (image.id[0] == 't') return {OcrSpan{"caption", Box{0.1, 0.1, 0.3, 0.2}}};
    return {};
  }
};

Outcome routing_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20261018);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  BackendSet base;
  base.classifier = std::make_shared<IdProbability>();
  base.detector = std::make_shared<EmptyDetector>();
  base.text_extractor = std::make_shared<IdText>();
  base.reasoner = std::make_shared<KeywordReasoner>(std::vector<std::string>{"caption"});

  long violations = 0;
  std::string first;
  auto violate = [&](const std::string& what) {
    if (violations++ == 0) first = what;
  };
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    double a = unit(rng), b = unit(rng);
    if (a > b) std::swap(a, b);
    const RoutingConfig cfg{a, b, rng() % 2 == 0};
    // Mix uniform draws with probabilities sitting exactly on a threshold.
    const int pick = static_cast<int>(rng() % 4);
    const double p = pick == 0 ? cfg.tau_low : pick == 1 ? cfg.tau_high : unit(rng);
    const bool has_text = rng() % 2 == 0;
    const Stage1Output s{p, {}, 0.0};
    const auto d = route(s, has_text, cfg);

    if (!d.invoke_stage2 && !(p < cfg.tau_low && !(has_text && cfg.text_trigger))) {
      violate(fmt::format("skip with p={} text={} cfg=({}, {}, {})", p, has_text, cfg.tau_low, cfg.tau_high,
                          cfg.text_trigger));
    }
    if (has_text && cfg.text_trigger &&
        !(d.invoke_stage2 && d.reason == RoutingReason::TextDetected)) {
      violate(fmt::format("text override missed at p={}", p));
    }
    if (p >= cfg.tau_low && !d.invoke_stage2) violate(fmt::format("ambiguous/unsafe p={} skipped", p));
    // Monotonic step: raising p never turns routing off.
    const double q = p + (1.0 - p) * unit(rng);
    if (d.invoke_stage2 && !route(Stage1Output{q, {}, 0.0}, has_text, cfg).invoke_stage2) {
      violate(fmt::format("routing not monotone between {} and {}", p, q));
    }

    CallCounts counts;
    const auto counted = with_call_counts(base, counts);
    const std::string id = fmt::format("{}-{:.17g}", has_text ? 't' : 'n', p);
    const auto vision = moderate(ImageRef{id, std::nullopt}, counted, cfg, Regime::VisionOnly);
    if (counts.extract_text != 0 || counts.reason != 0 || vision.stage2 || vision.routing.invoke_stage2) {
      violate("vision-only run touched stage 2");
    }
    if (vision.final_verdict != (p >= cfg.tau_high ? Verdict::Unsafe : Verdict::Safe)) {
      violate("vision-only verdict is not the tau_high step");
    }
  }
  const double secs = seconds_since(t0);
  if (secs >= 5.0) violate(fmt::format("runtime {:.2f}s", secs));
  if (violations == 0) return {true, fmt::format("{} cases, 0 violations, {:.2f}s", n, secs)};
  return {false, fmt::format("{} violations; first: {}", violations, first)};
}

Outcome metric_round_trip() {
  std::mt19937_64 rng(1000);
  int failures = 0;
  std::string first;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const std::int64_t total = 2 + static_cast<std::int64_t>(rng() % 1999);
    const std::int64_t pos = 1 + static_cast<std::int64_t>(rng() % (total - 1));
    const std::int64_t neg = total - pos;
    const std::int64_t tp = 1 + static_cast<std::int64_t>(rng() % pos);
    const std::int64_t fp = static_cast<std::int64_t>(rng() % (neg + 1));
    const ConfusionMatrix cm{tp, fp, neg - fp, pos - tp};
    const auto reported = round_report(compute_metrics(cm));
    const auto r = derive_confusion(pos, neg, MetricQuery::from(reported));
    const bool found = r.status != DerivationStatus::Infeasible &&
                       std::find(r.matrices.begin(), r.matrices.end(), cm) != r.matrices.end();
    if (!found && failures++ == 0) {
      first = fmt::format("({}, {}, {}, {})", cm.tp, cm.fp, cm.tn, cm.fn);
    }
  }
  if (failures == 0) return {true, fmt::format("{} random matrices recovered", n)};
  return {false, fmt::format("{} of {} not recovered; first {}", failures, n, first)};
}

Outcome latency_model() {
  Checker c;
  const CallCosts costs{7.0, 3.2, 1.5, 108.3};
  std::string summary;
  for (double rate : {0.0, 0.1, 0.25, 1.0}) {
    const int n = 200;
    const int routed = static_cast<int>(rate * n + 0.5);
    std::map<std::string, double> probs;
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
      const auto id = fmt::format("img-{:03}", i);
      probs[id] = i < routed ? 0.97 : 0.05;
      ids.push_back(id);
    }
    // Shuffle so routed images are not all in the warm-up window.
    std::mt19937_64 rng(static_cast<std::uint64_t>(rate * 1000) + 1);
    std::shuffle(ids.begin(), ids.end(), rng);

    struct Probs final : Classifier {
      std::map<std::string, double> p;
      ClassifierOutput classify(const ImageRef& image) const override { return {p.at(image.id)}; }
    };
    auto classifier = std::make_shared<Probs>();
    classifier->p = probs;
    BackendSet base;
    base.classifier = classifier;
    base.detector = std::make_shared<EmptyDetector>();
    base.text_extractor = std::make_shared<EmptyTextExtractor>();
    base.reasoner = std::make_shared<KeywordReasoner>(std::vector<std::string>{});

    FakeClock clock;
    const auto costed = with_simulated_costs(base, costs, clock);
    LatencyHarness harness(clock);
    const auto run = harness.time_run(
        [&](const std::string& id) {
          return moderate(ImageRef{id, std::nullopt}, costed, RoutingConfig{}, Regime::Multimodal, clock)
              .routing.invoke_stage2;
        },
        ids, kDefaultWarmup);
    const auto s = summarize(run.samples, run.warmup_discarded);
    const double expected = expected_latency(11.7, 120.0, rate);
    c.expect(std::abs(s.mean_ms - expected) < 1e-9,
             fmt::format("rate {}: mean {} vs expected {}", rate, s.mean_ms, expected));
    c.expect(s.count == static_cast<std::size_t>(n), fmt::format("rate {}: {} samples", rate, s.count));
    c.expect(s.warmup_discarded == 3, "three warm-ups discarded");
    c.expect(std::abs(s.stage2_fraction - rate) < 1e-12, "stage 2 fraction");
    summary += fmt::format("{}r={} mean={:.3f}", summary.empty() ? "" : ", ", rate, s.mean_ms);
  }
  return c.done(summary);
}

Outcome control_specificity_check() {
  const auto g = generate_fixture(load_spec("control_spec.json"));
  const auto replay = make_replay_backends(g.replay);
  const auto out = run_eval(build_suite(replay, Regime::Multimodal, RoutingConfig{}, true), g.manifest,
                            SubsetKind::ControlSafe, Regime::Multimodal);
  if (out.reports.size() != 1) return {false, "expected one cascade report"};
  const auto& r = out.reports[0];
  const double spec = control_specificity(r);
  return {spec == 99.00 && r.confusion.total() == 1200,
          fmt::format("{} control images, {} false positives, specificity {:.2f}", r.confusion.total(),
                      r.confusion.fp, spec)};
}

int run_cli(const std::string& args) {
  const auto cmd = fmt::format("\"{}\" {} > /dev/null 2>&1", MODCASCADE_CLI, args);
  return std::system(cmd.c_str());
}

Outcome end_to_end_determinism() {
  const fs::path dir = fs::temp_directory_path() / fmt::format("modcascade-accept-{}", ::getpid());
  fs::remove_all(dir);
  fs::create_directories(dir);
  Checker c;
  const auto manifest = (dir / "manifest.jsonl").string();
  const auto fixtures = (dir / "replay.jsonl").string();
  c.expect(run_cli(fmt::format("fixture-gen --spec \"{}\" --manifest-out \"{}\" --fixtures-out \"{}\"",
                               data_path("benchmark_spec.json"), manifest, fixtures)) == 0,
           "fixture-gen succeeded");
  std::vector<std::string> names;
  for (int run = 1; run <= 2; ++run) {
    const auto out = dir / fmt::format("run{}", run);
    fs::create_directories(out);
    c.expect(run_cli(fmt::format("eval --manifest \"{}\" --fixtures \"{}\" --out \"{}\" --plots \"{}\"", manifest,
                                 fixtures, (out / "report.json").string(), out.string())) == 0,
             fmt::format("eval run {} succeeded", run));
  }
  for (const char* f : {"report.json", "precision_recall.csv", "pareto.csv"}) {
    const auto a = read_file(dir / "run1" / f);
    const auto b = read_file(dir / "run2" / f);
    c.expect(!a.empty(), fmt::format("{} is non-empty", f));
    c.expect(a == b, fmt::format("{} identical", f));
  }
  fs::remove_all(dir);
  return c.done("report.json, precision_recall.csv and pareto.csv byte-identical across two runs");
}

std::string base64(const std::vector<unsigned char>& bytes) {
  static const char* abc = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += {abc[v >> 18], abc[(v >> 12) & 63], abc[(v >> 6) & 63], abc[v & 63]};
  }
  if (i + 1 == bytes.size()) {
    const unsigned v = bytes[i] << 16;
    out += {abc[v >> 18], abc[(v >> 12) & 63], '=', '='};
  } else if (i + 2 == bytes.size()) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += {abc[v >> 18], abc[(v >> 12) & 63], abc[(v >> 6) & 63], '='};
  }
  return out;
}

// Inline-payload backends: probability and OCR text derive from the bytes.
class ByteClassifier final : public Classifier {
 public:
  ClassifierOutput classify(const ImageRef& image) const override {
    unsigned sum = 0;
    for (auto b : *image.payload) sum += static_cast<unsigned>(b);
    return {static_cast<double>(sum % 1000) / 1000.0};
  }
};

class ByteText final : public TextExtractor {
 public:
  std::vector<OcrSpan> extract_text(const ImageRef& image) const override {
    if (static_cast<unsigned>((*image.payload)[0]) % 2 == 0) return {OcrSpan{"send pics", Box{0.1, 0.1, 0.4, 0.2}}};
    return {};
  }
};

Outcome service_transparency() {
  Checker c;
  const auto& w = benchmark();
  std::mutex seen_mutex;
  std::vector<std::string> seen_payloads;
  auto observer = [&](const ReasonerInput& in) {
    std::lock_guard lock(seen_mutex);
    seen_payloads.push_back(in.rendered_payload);
  };

  // Replay service.
  auto snap = std::make_shared<ServiceSnapshot>();
  snap->backends = with_reasoner_observer(w.replay.backends, observer);
  snap->backend_label = "replay";
  ModerationService svc(snap);
  const int port = svc.bind("127.0.0.1", 0);
  std::thread server([&] { svc.serve(); });
  httplib::Client client("127.0.0.1", port);
  httplib::Result probe;
  for (int i = 0; i < 100 && !probe; ++i) {
    probe = client.Get("/health");
    if (!probe) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  c.expect(static_cast<bool>(probe), "service came up");

  std::mt19937_64 rng(424242);
  const auto& records = w.generated.manifest.records;
  int agree = 0;
  for (int i = 0; i < 100 && probe; ++i) {
    const auto& rec = records[rng() % records.size()];
    const Regime regime = rng() % 2 ? Regime::Multimodal : Regime::VisionOnly;
    json body = {{"image_id", rec.id}, {"regime", std::string(to_string(regime))}};
    RoutingConfig cfg;
    if (rng() % 3 == 0) {
      cfg.text_trigger = false;
      body["config"] = {{"text_trigger", false}};
    }
    const auto res = client.Post("/moderate", body.dump(), "application/json");
    if (!res || res->status != 200) {
      c.expect(false, fmt::format("request {} for {} failed", i, rec.id));
      continue;
    }
    const auto got = json::parse(res->body);
    const auto direct = moderate(ImageRef{rec.id, std::nullopt}, w.replay.backends, cfg, regime);
    const bool same = got["final_verdict"] == to_string(direct.final_verdict) &&
                      got["recommendation"] == to_string(direct.recommendation) &&
                      got["routing_reason"] == to_string(direct.routing.reason) &&
                      got["stage2_invoked"] == direct.routing.invoke_stage2 &&
                      got["stage1_probability"] == direct.stage1.probability &&
                      got.contains("analysis") == direct.stage2.has_value() &&
                      (!direct.stage2 || got["analysis"] == direct.stage2->analysis);
    c.expect(same, fmt::format("request {} for {} matches direct moderate", i, rec.id));
    agree += same;
  }
  svc.stop();
  server.join();

  // Inline bytes through real-style backends: the reasoner must only see text.
  BackendSet bytes;
  bytes.classifier = std::make_shared<ByteClassifier>();
  bytes.detector = std::make_shared<EmptyDetector>();
  bytes.text_extractor = std::make_shared<ByteText>();
  bytes.reasoner = std::make_shared<KeywordReasoner>(std::vector<std::string>{"send pics"});
  bytes.accepts_inline_payload = true;
  auto inline_snap = std::make_shared<ServiceSnapshot>();
  inline_snap->backends = with_reasoner_observer(bytes, observer);
  ModerationService inline_svc(inline_snap);
  const std::size_t before = seen_payloads.size();
  std::vector<std::vector<unsigned char>> sent;
  for (int i = 0; i < 20; ++i) {
    std::vector<unsigned char> img(64);
    for (auto& b : img) b = static_cast<unsigned char>(rng() % 256);
    img[0] = static_cast<unsigned char>(img[0] & 0xFE);  // even first byte: OCR finds text, Stage 2 runs
    sent.push_back(img);
    const auto r = inline_svc.handle_moderate(json{{"payload_base64", base64(img)}}.dump());
    c.expect(r.status == 200, fmt::format("inline request {} status {}", i, r.status));
  }
  const std::size_t inline_calls = seen_payloads.size() - before;
  c.expect(inline_calls == sent.size(), fmt::format("{} inline reasoner calls", inline_calls));
  for (const auto& payload : seen_payloads) {
    c.expect(payload.rfind("REASONER PAYLOAD reasoner-payload/v1\n", 0) == 0, "payload uses the text template");
    for (unsigned char ch : payload) {
      if (ch != '\n' && (ch < 0x20 || ch > 0x7e)) {
        c.expect(false, "payload contains non-text bytes");
        break;
      }
    }
    for (const auto& img : sent) {
      const std::string raw(img.begin(), img.end());
      const std::string b64 = base64(img);
      c.expect(payload.find(raw.substr(0, 16)) == std::string::npos, "raw image bytes absent");
      c.expect(payload.find(b64.substr(0, 16)) == std::string::npos, "encoded image bytes absent");
    }
  }
  return c.done(fmt::format("{}/100 replay responses match direct moderate; {} reasoner inputs inspected, "
                            "0 carried image bytes",
                            agree, seen_payloads.size()));
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"full-set-reproduction", full_set_reproduction},
      {"stage2-delta-row", stage2_delta_row},
      {"text-subset-tables", text_subsets},
      {"pareto-frontier", pareto},
      {"routing-properties", routing_properties},
      {"metric-round-trip", metric_round_trip},
      {"latency-model", latency_model},
      {"control-specificity", control_specificity_check},
      {"end-to-end-determinism", end_to_end_determinism},
      {"service-transparency", service_transparency},
  };
  int failed = 0;
  int index = 0;
  for (const auto& c : criteria) {
    ++index;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << index << "] " << c.name << ": " << o.detail << "\n";
    if (!o.pass) ++failed;
  }
  std::cout << (failed == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failed)) << "\n";
  return failed == 0 ? 0 : 1;
}
