#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "modcascade/clock.hpp"

namespace modcascade {

inline constexpr int kDefaultWarmup = 3;

struct BenchSample {
  std::string image_id;
  double elapsed_ms = 0.0;
  bool stage2_invoked = false;

  bool operator==(const BenchSample&) const = default;
};

struct LatencySummary {
  double mean_ms = 0.0;
  std::size_t count = 0;
  std::size_t warmup_discarded = 0;
  double stage2_fraction = 0.0;

  bool operator==(const LatencySummary&) const = default;
};

struct TimedRun {
  std::vector<BenchSample> samples;
  std::size_t warmup_discarded = 0;
};

// Processes one image; returns whether Stage 2 ran for it.
using ImageRunner = std::function<bool(const std::string& image_id)>;

// Batch-size-1 timing harness. One run at a time per instance: a second
// concurrent call fails with Error(ConcurrentRun).
class LatencyHarness {
 public:
  explicit LatencyHarness(const Clock& clock = steady_clock()) : clock_(clock) {}

  // Warm-up iterations use the first `warmup` images (cycling if the list is
  // shorter) and are discarded. Each timed sample brackets exactly one runner
  // call. Runner errors propagate with the image id prepended.
  TimedRun time_run(const ImageRunner& runner, const std::vector<std::string>& images,
                    int warmup = kDefaultWarmup);

 private:
  const Clock& clock_;
  std::atomic<bool> busy_{false};
};

TimedRun time_run(const ImageRunner& runner, const std::vector<std::string>& images,
                  int warmup, const Clock& clock);

// Throws Error(EmptySamples) when `samples` is empty.
LatencySummary summarize(const std::vector<BenchSample>& samples, std::size_t warmup_discarded = 0);

// Mean latency of a cascade where a fraction `stage2_rate` of images pays the
// full pipeline cost and the rest only Stage 1.
double expected_latency(double stage1_ms, double full_ms, double stage2_rate);

struct ParetoPoint {
  std::string name;
  double latency_ms = 0.0;
  double accuracy_pct = 0.0;

  bool operator==(const ParetoPoint&) const = default;
};

// A dominates B when it is no slower and no less accurate, and strictly
// better on one axis.
bool dominates(const ParetoPoint& a, const ParetoPoint& b);

// Non-dominated points sorted by ascending latency (ties by name). Points
// identical on both axes are all kept.
std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint>& points);

}  // namespace modcascade
