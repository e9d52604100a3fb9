#include "modcascade/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "modcascade/error.hpp"

namespace modcascade {
namespace {

using i128 = __int128;

i128 pow10(int d) {
  i128 p = 1;
  while (d-- > 0) p *= 10;
  return p;
}

// round_half_up(100 * num / den, decimals) scaled by 10^decimals, exactly.
std::int64_t rounded_pct(std::int64_t num, std::int64_t den, i128 scale) {
  const i128 n = static_cast<i128>(num) * 100 * scale;
  return static_cast<std::int64_t>((2 * n + den) / (2 * static_cast<i128>(den)));
}

struct Ratio {
  std::int64_t num;
  std::int64_t den;  // 0 when undefined
};

Ratio acc_ratio(const ConfusionMatrix& c) { return {c.tp + c.tn, c.total()}; }
Ratio prec_ratio(const ConfusionMatrix& c) { return {c.tp, c.tp + c.fp}; }
Ratio rec_ratio(const ConfusionMatrix& c) { return {c.tp, c.tp + c.fn}; }
Ratio f1_ratio(const ConfusionMatrix& c) { return {2 * c.tp, 2 * c.tp + c.fp + c.fn}; }

std::optional<std::int64_t> target(const std::optional<double>& v, i128 scale) {
  if (!v) return std::nullopt;
  return std::llround(*v * static_cast<double>(scale));
}

bool matches(Ratio r, const std::optional<std::int64_t>& want, i128 scale) {
  if (!want) return true;
  if (r.den == 0) return false;
  return rounded_pct(r.num, r.den, scale) == *want;
}

std::optional<double> gap(Ratio r, const std::optional<double>& reported, double half) {
  if (!reported) return std::nullopt;
  const double x = 100.0 * static_cast<double>(r.num) / static_cast<double>(r.den);
  const double lo = *reported - half;
  const double hi = *reported + half;
  if (x < lo) return lo - x;
  if (x >= hi) return x - hi;
  return 0.0;
}

}  // namespace

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b) { return a += b; }

ConfusionMatrix accumulate(Verdict predicted, Verdict truth, ConfusionMatrix cm) {
  if (predicted == Verdict::Unsafe) {
    (truth == Verdict::Unsafe ? cm.tp : cm.fp) += 1;
  } else {
    (truth == Verdict::Unsafe ? cm.fn : cm.tn) += 1;
  }
  return cm;
}

double accuracy_pct(const ConfusionMatrix& cm) {
  if (cm.total() <= 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix is empty");
  return 100.0 * static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

double precision_pct(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fp <= 0) {
    throw Error(ErrorCode::UndefinedPrecision, "precision undefined: no positive predictions");
  }
  return 100.0 * static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
}

double recall_pct(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fn <= 0) {
    throw Error(ErrorCode::UndefinedRecall, "recall undefined: no positive ground truth");
  }
  return 100.0 * static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
}

double f1_pct(const ConfusionMatrix& cm) {
  // Both denominators must exist for F1 to mean anything.
  precision_pct(cm);
  recall_pct(cm);
  return 100.0 * static_cast<double>(2 * cm.tp) / static_cast<double>(2 * cm.tp + cm.fp + cm.fn);
}

double specificity_pct(const ConfusionMatrix& cm) {
  if (cm.tn + cm.fp <= 0) {
    throw Error(ErrorCode::EmptyMatrix, "specificity undefined: no negative ground truth");
  }
  return 100.0 * static_cast<double>(cm.tn) / static_cast<double>(cm.tn + cm.fp);
}

MetricSet compute_metrics(const ConfusionMatrix& cm) {
  if (cm.total() <= 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix is empty");
  return {accuracy_pct(cm), precision_pct(cm), recall_pct(cm), f1_pct(cm)};
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double scaled = value * scale;
  const double nudge = std::abs(scaled) * 1e-9;
  return std::floor(scaled + 0.5 + nudge) / scale;
}

MetricSet round_report(const MetricSet& m, int decimals) {
  return {round_half_up(m.accuracy, decimals), round_half_up(m.precision, decimals),
          round_half_up(m.recall, decimals), round_half_up(m.f1, decimals)};
}

MetricQuery MetricQuery::from(const MetricSet& m) {
  return {m.accuracy, m.precision, m.recall, m.f1};
}

std::string_view to_string(DerivationStatus s) {
  switch (s) {
    case DerivationStatus::Unique: return "Unique";
    case DerivationStatus::Multiple: return "Multiple";
    case DerivationStatus::Infeasible: return "Infeasible";
  }
  return "Infeasible";
}

double MetricGaps::max() const {
  double m = 0.0;
  for (const auto& g : {accuracy, precision, recall, f1}) {
    if (g) m = std::max(m, *g);
  }
  return m;
}

DerivationResult derive_confusion(std::int64_t positives, std::int64_t negatives,
                                  const MetricQuery& reported, int decimals) {
  if (positives <= 0 || negatives <= 0) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("class counts must be positive (got {}, {})", positives, negatives));
  }
  if (decimals < 0 || decimals > 9) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("decimals {} outside [0,9]", decimals));
  }
  const i128 scale = pow10(decimals);
  const auto want_acc = target(reported.accuracy, scale);
  const auto want_prec = target(reported.precision, scale);
  const auto want_rec = target(reported.recall, scale);
  const auto want_f1 = target(reported.f1, scale);

  DerivationResult result;
  for (std::int64_t tp = 0; tp <= positives; ++tp) {
    const ConfusionMatrix head{tp, 0, negatives, positives - tp};
    // Recall depends on tp alone; checking it first prunes most of the grid.
    if (!matches(rec_ratio(head), want_rec, scale)) continue;
    for (std::int64_t fp = 0; fp <= negatives; ++fp) {
      const ConfusionMatrix cm{tp, fp, negatives - fp, positives - tp};
      if (matches(prec_ratio(cm), want_prec, scale) && matches(acc_ratio(cm), want_acc, scale) &&
          matches(f1_ratio(cm), want_f1, scale)) {
        result.matrices.push_back(cm);
      }
    }
  }

  if (!result.matrices.empty()) {
    result.status =
        result.matrices.size() == 1 ? DerivationStatus::Unique : DerivationStatus::Multiple;
    result.discrepancy.assign(result.matrices.size(), MetricGaps{});
    for (auto& g : result.discrepancy) {
      if (reported.accuracy) g.accuracy = 0.0;
      if (reported.precision) g.precision = 0.0;
      if (reported.recall) g.recall = 0.0;
      if (reported.f1) g.f1 = 0.0;
    }
    return result;
  }

  result.status = DerivationStatus::Infeasible;
  const double half = 0.5 / static_cast<double>(scale);
  double best = std::numeric_limits<double>::infinity();
  for (std::int64_t tp = 0; tp <= positives; ++tp) {
    for (std::int64_t fp = 0; fp <= negatives; ++fp) {
      const ConfusionMatrix cm{tp, fp, negatives - fp, positives - tp};
      const Ratio ratios[] = {acc_ratio(cm), prec_ratio(cm), rec_ratio(cm), f1_ratio(cm)};
      const std::optional<double>* wanted[] = {&reported.accuracy, &reported.precision,
                                               &reported.recall, &reported.f1};
      bool defined = true;
      for (int i = 0; i < 4; ++i) {
        if (wanted[i]->has_value() && ratios[i].den == 0) defined = false;
      }
      if (!defined) continue;
      MetricGaps g{gap(ratios[0], reported.accuracy, half), gap(ratios[1], reported.precision, half),
                   gap(ratios[2], reported.recall, half), gap(ratios[3], reported.f1, half)};
      const double m = g.max();
      if (m < best - 1e-12) {
        best = m;
        result.matrices.clear();
        result.discrepancy.clear();
      }
      if (m <= best + 1e-12) {
        result.matrices.push_back(cm);
        result.discrepancy.push_back(g);
      }
    }
  }
  return result;
}

}  // namespace modcascade
