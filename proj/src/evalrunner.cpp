#include "modcascade/evalrunner.hpp"

#include <cmath>
#include <future>

#include <fmt/core.h>

namespace modcascade {
namespace {

struct NonOwningClock {
  static std::shared_ptr<const Clock> steady() {
    return std::shared_ptr<const Clock>(&steady_clock(), [](const Clock*) {});
  }
};

// Exact difference of two 2-decimal values, computed in hundredths.
std::optional<double> hundredths_diff(const std::optional<double>& a,
                                      const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return static_cast<double>(std::llround(*a * 100.0) - std::llround(*b * 100.0)) / 100.0;
}

EvalReport evaluate_model(const ModelEntry& entry, const DatasetManifest& subset_manifest,
                          SubsetKind subset, const EvalOptions& options) {
  std::vector<std::string> ids;
  ids.reserve(subset_manifest.records.size());
  for (const auto& r : subset_manifest.records) ids.push_back(r.id);

  std::vector<Verdict> predictions;
  predictions.reserve(ids.size());
  long calls = 0;
  const long warmup = options.warmup;
  auto runner = [&](const std::string& id) {
    const auto p = entry.runner(id);
    if (calls++ >= warmup) predictions.push_back(p.verdict);
    return p.stage2_invoked;
  };

  LatencyHarness harness(*entry.clock);
  const auto run = harness.time_run(runner, ids, options.warmup);

  EvalReport rep;
  rep.model = entry.name;
  rep.regime = entry.regime;
  rep.subset = subset;
  for (std::size_t i = 0; i < subset_manifest.records.size(); ++i) {
    rep.confusion = accumulate(predictions[i], subset_manifest.records[i].label, rep.confusion);
  }
  rep.metrics = report_metrics(rep.confusion);
  rep.latency = summarize(run.samples, run.warmup_discarded);
  rep.threshold = entry.threshold;
  rep.template_version = entry.template_version;
  return rep;
}

}  // namespace

ModelEntry cascade_entry(std::string name, const BackendSet& backends, const RoutingConfig& cfg,
                         Regime regime, const std::optional<CallCosts>& simulate) {
  validate(cfg);
  ModelEntry e;
  e.name = std::move(name);
  e.regime = regime;
  e.template_version = std::string(kPayloadTemplateVersion);
  if (simulate) {
    auto clock = std::make_shared<FakeClock>();
    auto costed = with_simulated_costs(backends, *simulate, *clock);
    e.clock = clock;
    e.runner = [costed, cfg, regime, clock](const std::string& id) {
      const auto d = moderate(ImageRef{id, std::nullopt}, costed, cfg, regime, *clock);
      return Prediction{d.final_verdict, d.routing.invoke_stage2};
    };
  } else {
    e.clock = NonOwningClock::steady();
    e.runner = [backends, cfg, regime](const std::string& id) {
      const auto d = moderate(ImageRef{id, std::nullopt}, backends, cfg, regime);
      return Prediction{d.final_verdict, d.routing.invoke_stage2};
    };
  }
  return e;
}

ModelEntry external_entry(const ExternalModel& model, bool simulate) {
  ModelEntry e;
  e.name = model.name;
  e.regime = model.regime;
  e.threshold = model.threshold;
  auto m = std::make_shared<const ExternalModel>(model);
  if (simulate) {
    auto clock = std::make_shared<FakeClock>();
    const auto cost = from_ms(model.latency_ms);
    e.clock = clock;
    e.runner = [m, clock, cost](const std::string& id) {
      clock->advance(cost);
      return Prediction{m->predict(id), false};
    };
  } else {
    e.clock = NonOwningClock::steady();
    e.runner = [m](const std::string& id) { return Prediction{m->predict(id), false}; };
  }
  return e;
}

std::vector<ModelEntry> build_suite(const ReplayBackendSet& replay, Regime regime,
                                    const RoutingConfig& cfg, bool simulate_clock) {
  std::vector<ModelEntry> suite;
  const auto& info = replay.cascade();
  const auto& name = regime == Regime::VisionOnly ? info.vision_only_name : info.multimodal_name;
  std::optional<CallCosts> costs;
  if (simulate_clock) costs = info.costs;
  suite.push_back(cascade_entry(name, replay.backends, cfg, regime, costs));
  for (const auto& m : replay.data->models) {
    if (m.regime == regime) suite.push_back(external_entry(m, simulate_clock));
  }
  return suite;
}

ReportMetrics report_metrics(const ConfusionMatrix& cm, int decimals) {
  ReportMetrics out;
  out.accuracy = round_half_up(accuracy_pct(cm), decimals);
  if (cm.tp + cm.fp > 0) out.precision = round_half_up(precision_pct(cm), decimals);
  if (cm.tp + cm.fn > 0) out.recall = round_half_up(recall_pct(cm), decimals);
  if (out.precision && out.recall) out.f1 = round_half_up(f1_pct(cm), decimals);
  return out;
}

EvalOutcome run_eval(const std::vector<ModelEntry>& suite, const DatasetManifest& manifest,
                     SubsetKind subset, Regime regime, const EvalOptions& options) {
  for (const auto& e : suite) {
    if (e.regime != regime) {
      throw Error(ErrorCode::RegimeMismatch,
                  fmt::format("model '{}' is {} but the run is {}", e.name, to_string(e.regime),
                              to_string(regime)));
    }
    if (!e.runner || !e.clock) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("model '{}' is incomplete", e.name));
    }
  }
  const auto sub = filter_subset(manifest, subset);
  if (sub.records.empty()) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("subset {} of '{}' is empty", to_string(subset), manifest.name));
  }

  using Result = std::pair<std::optional<EvalReport>, std::optional<ModelFailure>>;
  auto one = [&](const ModelEntry& e) -> Result {
    try {
      return {evaluate_model(e, sub, subset, options), std::nullopt};
    } catch (const Error& err) {
      return {std::nullopt, ModelFailure{e.name, err.code(), err.what()}};
    }
  };

  std::vector<Result> results;
  if (options.parallel_models) {
    std::vector<std::future<Result>> futures;
    for (const auto& e : suite) futures.push_back(std::async(std::launch::async, one, std::cref(e)));
    for (auto& f : futures) results.push_back(f.get());
  } else {
    for (const auto& e : suite) results.push_back(one(e));
  }

  EvalOutcome out;
  for (auto& [rep, fail] : results) {
    if (rep) out.reports.push_back(std::move(*rep));
    if (fail) out.failures.push_back(std::move(*fail));
  }
  return out;
}

DeltaRow stage2_delta(const EvalReport& stage1_only, const EvalReport& with_stage2) {
  if (stage1_only.subset != with_stage2.subset ||
      stage1_only.confusion.total() != with_stage2.confusion.total()) {
    throw Error(ErrorCode::SubsetMismatch,
                fmt::format("cannot compare {} on {} with {} on {}", stage1_only.model,
                            to_string(stage1_only.subset), with_stage2.model,
                            to_string(with_stage2.subset)));
  }
  DeltaRow d;
  d.from_model = stage1_only.model;
  d.to_model = with_stage2.model;
  d.subset = stage1_only.subset;
  d.d_accuracy = hundredths_diff(with_stage2.metrics.accuracy, stage1_only.metrics.accuracy);
  d.d_f1 = hundredths_diff(with_stage2.metrics.f1, stage1_only.metrics.f1);
  d.d_precision = hundredths_diff(with_stage2.metrics.precision, stage1_only.metrics.precision);
  d.d_recall = hundredths_diff(with_stage2.metrics.recall, stage1_only.metrics.recall);
  d.d_latency_ms = with_stage2.latency.mean_ms - stage1_only.latency.mean_ms;
  return d;
}

double control_specificity(const EvalReport& report) {
  if (report.confusion.positives() > 0) {
    throw Error(ErrorCode::NonControlSubset,
                fmt::format("report for '{}' includes {} unsafe-labeled images", report.model,
                            report.confusion.positives()));
  }
  return round_half_up(specificity_pct(report.confusion), 2);
}

}  // namespace modcascade
