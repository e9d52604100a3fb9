#pragma once

// Two-regime evaluation over a manifest: one report per model, Stage-2
// deltas, control-set specificity, and report/plot emission.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modcascade/bench.hpp"
#include "modcascade/clock.hpp"
#include "modcascade/error.hpp"
#include "modcascade/metrics.hpp"
#include "modcascade/pipeline.hpp"
#include "modcascade/replay.hpp"
#include "modcascade/subsets.hpp"

namespace modcascade {

inline constexpr std::string_view kReportSchema = "modcascade-report";
inline constexpr int kReportVersion = 1;
inline constexpr double kPrecisionRecallGuidePct = 75.0;

struct Prediction {
  Verdict verdict = Verdict::Safe;
  bool stage2_invoked = false;
};

struct ModelEntry {
  std::string name;
  Regime regime = Regime::VisionOnly;
  std::function<Prediction(const std::string& image_id)> runner;
  // Clock the runner's cost is observed on. Owned by the entry so parallel
  // model runs never share simulated time.
  std::shared_ptr<const Clock> clock;
  std::optional<double> threshold;         // probability-emitting models
  std::optional<std::string> template_version;  // cascade entries
};

// Cascade entry. With `simulate` set, backends are charged `costs` on a
// private FakeClock; otherwise the steady clock measures real time.
ModelEntry cascade_entry(std::string name, const BackendSet& backends, const RoutingConfig& cfg,
                         Regime regime, const std::optional<CallCosts>& simulate);

// External model answered from recorded scores. With `simulate`, each call
// costs the model's latency_ms on a private FakeClock.
ModelEntry external_entry(const ExternalModel& model, bool simulate);

// Cascade plus every fixture model declared for `regime`, in fixture order.
std::vector<ModelEntry> build_suite(const ReplayBackendSet& replay, Regime regime,
                                    const RoutingConfig& cfg, bool simulate_clock);

// Rounded metrics; precision/recall/F1 are absent when undefined (for
// example on an all-safe control subset).
struct ReportMetrics {
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;

  bool operator==(const ReportMetrics&) const = default;
};

ReportMetrics report_metrics(const ConfusionMatrix& cm, int decimals = 2);

struct EvalReport {
  std::string model;
  Regime regime = Regime::VisionOnly;
  SubsetKind subset = SubsetKind::Full;
  ConfusionMatrix confusion;
  ReportMetrics metrics;
  LatencySummary latency;
  std::optional<double> threshold;
  std::optional<std::string> template_version;

  bool operator==(const EvalReport&) const = default;
};

struct ModelFailure {
  std::string model;
  ErrorCode code = ErrorCode::BackendFailure;
  std::string message;

  bool operator==(const ModelFailure&) const = default;
};

struct EvalOutcome {
  std::vector<EvalReport> reports;  // suite order
  std::vector<ModelFailure> failures;
};

struct EvalOptions {
  int warmup = kDefaultWarmup;
  bool parallel_models = false;
};

// Throws Error(RegimeMismatch) if any entry's regime differs from `regime`,
// Error(InvalidArgument) if the subset is empty. A backend error only drops
// the affected model's report.
EvalOutcome run_eval(const std::vector<ModelEntry>& suite, const DatasetManifest& manifest,
                     SubsetKind subset, Regime regime, const EvalOptions& options = {});

struct DeltaRow {
  std::string from_model;
  std::string to_model;
  SubsetKind subset = SubsetKind::Full;
  std::optional<double> d_accuracy;
  std::optional<double> d_f1;
  std::optional<double> d_precision;
  std::optional<double> d_recall;
  double d_latency_ms = 0.0;

  bool operator==(const DeltaRow&) const = default;
};

// Component-wise (with_stage2 - stage1_only) on rounded metrics.
// Throws Error(SubsetMismatch) when the reports cover different subsets.
DeltaRow stage2_delta(const EvalReport& stage1_only, const EvalReport& with_stage2);

// tn / (tn + fp) as a rounded percentage. Throws Error(NonControlSubset) if
// the report saw any Unsafe-labeled image.
double control_specificity(const EvalReport& report);

enum class ReportFormat { TableText, Delimited, Structured };

ReportFormat parse_report_format(std::string_view s);

struct ReportBundle {
  std::vector<EvalReport> reports;
  std::vector<DeltaRow> deltas;

  bool operator==(const ReportBundle&) const = default;
};

std::string emit_report(const ReportBundle& bundle, ReportFormat format);

// Parses the Structured form back. Throws Error(ParseError).
ReportBundle parse_structured_report(std::string_view text);

struct PlotData {
  std::string precision_recall;  // name,precision,recall,regime
  std::string pareto;            // name,latency_ms,accuracy_pct,frontier_member
};

PlotData emit_plot_data(const std::vector<EvalReport>& reports);

}  // namespace modcascade
