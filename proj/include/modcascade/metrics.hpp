#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "modcascade/types.hpp"

namespace modcascade {

// Counts with Unsafe as the positive class.
struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t positives() const { return tp + fn; }
  std::int64_t negatives() const { return fp + tn; }
  std::int64_t total() const { return tp + fp + tn + fn; }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b);

// Percentages on the [0,100] scale.
struct MetricSet {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  bool operator==(const MetricSet&) const = default;
};

ConfusionMatrix accumulate(Verdict predicted, Verdict truth, ConfusionMatrix cm);

// Individual metrics, unrounded. Each throws on a zero denominator:
// EmptyMatrix, UndefinedPrecision or UndefinedRecall.
double accuracy_pct(const ConfusionMatrix& cm);
double precision_pct(const ConfusionMatrix& cm);
double recall_pct(const ConfusionMatrix& cm);
double f1_pct(const ConfusionMatrix& cm);  // 2tp / (2tp + fp + fn)
double specificity_pct(const ConfusionMatrix& cm);

MetricSet compute_metrics(const ConfusionMatrix& cm);

// Round half up at `decimals` places of the percentage value. Values within
// a relative 1e-9 of a half-way point round up, so binary representation
// error in a computed ratio never flips a tie.
double round_half_up(double value, int decimals = 2);
MetricSet round_report(const MetricSet& m, int decimals = 2);

// Published metrics used to constrain a derivation; absent ones are ignored.
struct MetricQuery {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;

  static MetricQuery from(const MetricSet& m);
};

enum class DerivationStatus { Unique, Multiple, Infeasible };

std::string_view to_string(DerivationStatus s);

struct MetricGaps {
  // Distance (percentage points) between the exact metric and the interval
  // that rounds to the reported value; 0 when it rounds correctly.
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;

  double max() const;
};

struct DerivationResult {
  DerivationStatus status = DerivationStatus::Infeasible;
  std::vector<ConfusionMatrix> matrices;
  // One entry per matrix; all zero unless Infeasible.
  std::vector<MetricGaps> discrepancy;
};

// Enumerates every (tp, fp) with 0 <= tp <= positives and 0 <= fp <= negatives
// whose exact metrics round to every reported value. When nothing matches,
// returns the candidates minimizing the largest rounding gap. Throws
// Error(InvalidArgument) for non-positive class counts or negative decimals.
DerivationResult derive_confusion(std::int64_t positives, std::int64_t negatives,
                                  const MetricQuery& reported, int decimals = 2);

}  // namespace modcascade
