#pragma once

// Model-backend contracts for the two cascade stages, plus the in-repo
// synthetic backends and decorators used for testing and simulation.
//
// Every backend must tolerate concurrent calls. Implementations here are
// immutable after construction; stateful engines can be wrapped with
// make_pooled_* so that each pooled instance serves one call at a time.

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "modcascade/clock.hpp"
#include "modcascade/types.hpp"

namespace modcascade {

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual ClassifierOutput classify(const ImageRef& image) const = 0;
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<Detection> detect(const ImageRef& image) const = 0;
};

class TextExtractor {
 public:
  virtual ~TextExtractor() = default;
  // Spans come back sorted by (y_min, x_min); see sort_spans.
  virtual std::vector<OcrSpan> extract_text(const ImageRef& image) const = 0;
};

class Reasoner {
 public:
  virtual ~Reasoner() = default;
  virtual ReasonerVerdict reason(const ReasonerInput& input) const = 0;
};

struct BackendSet {
  std::shared_ptr<const Classifier> classifier;
  std::shared_ptr<const Detector> detector;
  std::shared_ptr<const TextExtractor> text_extractor;
  std::shared_ptr<const Reasoner> reasoner;
  // Replay backends answer by id only and cannot process novel bytes.
  bool accepts_inline_payload = false;
};

// Stable sort by (y_min, x_min). Spans with identical origins keep input order.
void sort_spans(std::vector<OcrSpan>& spans);

// ---- Reasoner response parsing ---------------------------------------------

// Parses the line-oriented reasoner response:
//
//   Verdict: Safe|Unsafe
//   Analysis: <free text, may continue on following lines>
//   Recommendation: Block|Review|Allow with warning|Allow
//
// Keys are case-insensitive. Throws Error(MalformedResponse) if a key is
// missing, a value is not recognized, or the recommendation contradicts the
// verdict.
ReasonerVerdict parse_reasoner_response(std::string_view text);

using CompletionFn = std::function<std::string(const std::string& prompt)>;

// Extension point for a real text model: sends the rendered payload to a
// completion function and parses the reply.
class CompletionReasoner final : public Reasoner {
 public:
  explicit CompletionReasoner(CompletionFn complete);
  ReasonerVerdict reason(const ReasonerInput& input) const override;

 private:
  CompletionFn complete_;
};

// ---- Synthetic backends ----------------------------------------------------

class ConstantClassifier final : public Classifier {
 public:
  explicit ConstantClassifier(double probability);
  ClassifierOutput classify(const ImageRef& image) const override;

 private:
  double probability_;
};

class EmptyDetector final : public Detector {
 public:
  std::vector<Detection> detect(const ImageRef&) const override { return {}; }
};

class EmptyTextExtractor final : public TextExtractor {
 public:
  std::vector<OcrSpan> extract_text(const ImageRef&) const override { return {}; }
};

// Flags the payload as unsafe when any keyword occurs in it (case-insensitive)
// or any detection label is in the flagged label set.
class KeywordReasoner final : public Reasoner {
 public:
  KeywordReasoner(std::vector<std::string> keywords,
                  std::set<std::string> flagged_labels = {});
  ReasonerVerdict reason(const ReasonerInput& input) const override;

 private:
  std::vector<std::string> keywords_;
  std::set<std::string> flagged_labels_;
};

// ---- Decorators ------------------------------------------------------------

struct CallCounts {
  std::atomic<long> classify{0};
  std::atomic<long> detect{0};
  std::atomic<long> extract_text{0};
  std::atomic<long> reason{0};
};

// Wraps every backend so each call increments `counts`. `counts` must outlive
// the returned set.
BackendSet with_call_counts(const BackendSet& inner, CallCounts& counts);

// Reasoner wrapper that hands every input to an observer before delegating.
BackendSet with_reasoner_observer(
    const BackendSet& inner,
    std::function<void(const ReasonerInput&)> observer);

// Per-call simulated cost in milliseconds, charged to a FakeClock.
struct CallCosts {
  double classify_ms = 0.0;
  double detect_ms = 0.0;
  double extract_text_ms = 0.0;
  double reason_ms = 0.0;

  bool operator==(const CallCosts&) const = default;
};

// Advances `clock` by the matching cost on every backend call. `clock` must
// outlive the returned set.
BackendSet with_simulated_costs(const BackendSet& inner, const CallCosts& costs,
                                FakeClock& clock);

// ---- Instance pools for stateful engines -----------------------------------

// Hands out instances round-robin; each instance serves one call at a time.
template <typename Backend>
class InstancePool {
 public:
  explicit InstancePool(std::vector<std::unique_ptr<Backend>> instances)
      : slots_(instances.size()) {
    for (std::size_t i = 0; i < instances.size(); ++i) {
      slots_[i].instance = std::move(instances[i]);
    }
  }

  std::size_t size() const { return slots_.size(); }

  template <typename Fn>
  auto with(Fn&& fn) const {
    auto& slot = slots_[next_.fetch_add(1) % slots_.size()];
    std::lock_guard lock(slot.mutex);
    return fn(static_cast<const Backend&>(*slot.instance));
  }

 private:
  struct Slot {
    std::unique_ptr<Backend> instance;
    std::mutex mutex;
  };
  mutable std::vector<Slot> slots_;
  mutable std::atomic<std::size_t> next_{0};
};

// Pool constructors. Throw Error(InvalidArgument) on an empty instance list.
std::shared_ptr<const Classifier> make_pooled_classifier(
    std::vector<std::unique_ptr<Classifier>> instances);
std::shared_ptr<const Detector> make_pooled_detector(
    std::vector<std::unique_ptr<Detector>> instances);
std::shared_ptr<const TextExtractor> make_pooled_text_extractor(
    std::vector<std::unique_ptr<TextExtractor>> instances);
std::shared_ptr<const Reasoner> make_pooled_reasoner(
    std::vector<std::unique_ptr<Reasoner>> instances);

}  // namespace modcascade
