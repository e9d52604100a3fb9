#include "modcascade/bench.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "modcascade/error.hpp"

namespace modcascade {
namespace {

bool call_runner(const ImageRunner& runner, const std::string& id) {
  try {
    return runner(id);
  } catch (const Error& e) {
    Error wrapped(e.code(), fmt::format("image '{}': {}", id, e.what()));
    if (e.stage()) throw Error(e.code(), wrapped.what(), *e.stage());
    throw wrapped;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::BackendFailure, fmt::format("image '{}': {}", id, e.what()));
  }
}

}  // namespace

TimedRun LatencyHarness::time_run(const ImageRunner& runner, const std::vector<std::string>& images,
                                  int warmup) {
  if (images.empty()) throw Error(ErrorCode::InvalidArgument, "no images to time");
  if (warmup < 0) throw Error(ErrorCode::InvalidArgument, "warm-up count must be >= 0");
  if (busy_.exchange(true)) {
    throw Error(ErrorCode::ConcurrentRun, "a timing run is already in progress on this harness");
  }
  struct Release {
    std::atomic<bool>& flag;
    ~Release() { flag = false; }
  } release{busy_};

  TimedRun run;
  for (int i = 0; i < warmup; ++i) {
    call_runner(runner, images[static_cast<std::size_t>(i) % images.size()]);
  }
  run.warmup_discarded = static_cast<std::size_t>(warmup);
  run.samples.reserve(images.size());
  for (const auto& id : images) {
    const auto start = clock_.now();
    const bool stage2 = call_runner(runner, id);
    const auto stop = clock_.now();
    run.samples.push_back({id, to_ms(stop - start), stage2});
  }
  return run;
}

TimedRun time_run(const ImageRunner& runner, const std::vector<std::string>& images, int warmup,
                  const Clock& clock) {
  LatencyHarness harness(clock);
  return harness.time_run(runner, images, warmup);
}

LatencySummary summarize(const std::vector<BenchSample>& samples, std::size_t warmup_discarded) {
  if (samples.empty()) throw Error(ErrorCode::EmptySamples, "no samples to summarize");
  double sum = 0.0;
  std::size_t stage2 = 0;
  for (const auto& s : samples) {
    sum += s.elapsed_ms;
    if (s.stage2_invoked) ++stage2;
  }
  LatencySummary out;
  out.count = samples.size();
  out.mean_ms = sum / static_cast<double>(samples.size());
  out.warmup_discarded = warmup_discarded;
  out.stage2_fraction = static_cast<double>(stage2) / static_cast<double>(samples.size());
  return out;
}

double expected_latency(double stage1_ms, double full_ms, double stage2_rate) {
  if (!(stage2_rate >= 0.0 && stage2_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("stage 2 rate {} outside [0,1]", stage2_rate));
  }
  if (!(stage1_ms <= full_ms)) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("stage 1 cost {} exceeds full pipeline cost {}", stage1_ms, full_ms));
  }
  return (1.0 - stage2_rate) * stage1_ms + stage2_rate * full_ms;
}

bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.latency_ms <= b.latency_ms && a.accuracy_pct >= b.accuracy_pct &&
         (a.latency_ms < b.latency_ms || a.accuracy_pct > b.accuracy_pct);
}

std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint>& points) {
  std::vector<ParetoPoint> front;
  for (const auto& p : points) {
    const bool dominated = std::any_of(points.begin(), points.end(),
                                       [&](const ParetoPoint& q) { return dominates(q, p); });
    if (!dominated) front.push_back(p);
  }
  std::stable_sort(front.begin(), front.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.latency_ms != b.latency_ms) return a.latency_ms < b.latency_ms;
    return a.name < b.name;
  });
  return front;
}

}  // namespace modcascade
