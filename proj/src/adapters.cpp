#include "modcascade/adapters.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <sstream>

#include <fmt/core.h>

#include "modcascade/error.hpp"

namespace modcascade {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// ---- counting ----

class CountingClassifier final : public Classifier {
 public:
  CountingClassifier(std::shared_ptr<const Classifier> inner, std::atomic<long>& n)
      : inner_(std::move(inner)), n_(n) {}
  ClassifierOutput classify(const ImageRef& image) const override {
    ++n_;
    return inner_->classify(image);
  }

 private:
  std::shared_ptr<const Classifier> inner_;
  std::atomic<long>& n_;
};

class CountingDetector final : public Detector {
 public:
  CountingDetector(std::shared_ptr<const Detector> inner, std::atomic<long>& n)
      : inner_(std::move(inner)), n_(n) {}
  std::vector<Detection> detect(const ImageRef& image) const override {
    ++n_;
    return inner_->detect(image);
  }

 private:
  std::shared_ptr<const Detector> inner_;
  std::atomic<long>& n_;
};

class CountingTextExtractor final : public TextExtractor {
 public:
  CountingTextExtractor(std::shared_ptr<const TextExtractor> inner, std::atomic<long>& n)
      : inner_(std::move(inner)), n_(n) {}
  std::vector<OcrSpan> extract_text(const ImageRef& image) const override {
    ++n_;
    return inner_->extract_text(image);
  }

 private:
  std::shared_ptr<const TextExtractor> inner_;
  std::atomic<long>& n_;
};

class ObservedReasoner final : public Reasoner {
 public:
  ObservedReasoner(std::shared_ptr<const Reasoner> inner,
                   std::function<void(const ReasonerInput&)> observer)
      : inner_(std::move(inner)), observer_(std::move(observer)) {}
  ReasonerVerdict reason(const ReasonerInput& input) const override {
    observer_(input);
    return inner_->reason(input);
  }

 private:
  std::shared_ptr<const Reasoner> inner_;
  std::function<void(const ReasonerInput&)> observer_;
};

// ---- simulated cost ----

class CostedClassifier final : public Classifier {
 public:
  CostedClassifier(std::shared_ptr<const Classifier> inner, Nanos cost, FakeClock& clock)
      : inner_(std::move(inner)), cost_(cost), clock_(clock) {}
  ClassifierOutput classify(const ImageRef& image) const override {
    clock_.advance(cost_);
    return inner_->classify(image);
  }

 private:
  std::shared_ptr<const Classifier> inner_;
  Nanos cost_;
  FakeClock& clock_;
};

class CostedDetector final : public Detector {
 public:
  CostedDetector(std::shared_ptr<const Detector> inner, Nanos cost, FakeClock& clock)
      : inner_(std::move(inner)), cost_(cost), clock_(clock) {}
  std::vector<Detection> detect(const ImageRef& image) const override {
    clock_.advance(cost_);
    return inner_->detect(image);
  }

 private:
  std::shared_ptr<const Detector> inner_;
  Nanos cost_;
  FakeClock& clock_;
};

class CostedTextExtractor final : public TextExtractor {
 public:
  CostedTextExtractor(std::shared_ptr<const TextExtractor> inner, Nanos cost,
                      FakeClock& clock)
      : inner_(std::move(inner)), cost_(cost), clock_(clock) {}
  std::vector<OcrSpan> extract_text(const ImageRef& image) const override {
    clock_.advance(cost_);
    return inner_->extract_text(image);
  }

 private:
  std::shared_ptr<const TextExtractor> inner_;
  Nanos cost_;
  FakeClock& clock_;
};

class CostedReasoner final : public Reasoner {
 public:
  CostedReasoner(std::shared_ptr<const Reasoner> inner, Nanos cost, FakeClock& clock)
      : inner_(std::move(inner)), cost_(cost), clock_(clock) {}
  ReasonerVerdict reason(const ReasonerInput& input) const override {
    clock_.advance(cost_);
    return inner_->reason(input);
  }

 private:
  std::shared_ptr<const Reasoner> inner_;
  Nanos cost_;
  FakeClock& clock_;
};

// ---- pools ----

class PooledClassifier final : public Classifier {
 public:
  explicit PooledClassifier(std::vector<std::unique_ptr<Classifier>> v) : pool_(std::move(v)) {}
  ClassifierOutput classify(const ImageRef& image) const override {
    return pool_.with([&](const Classifier& c) { return c.classify(image); });
  }

 private:
  InstancePool<Classifier> pool_;
};

class PooledDetector final : public Detector {
 public:
  explicit PooledDetector(std::vector<std::unique_ptr<Detector>> v) : pool_(std::move(v)) {}
  std::vector<Detection> detect(const ImageRef& image) const override {
    return pool_.with([&](const Detector& d) { return d.detect(image); });
  }

 private:
  InstancePool<Detector> pool_;
};

class PooledTextExtractor final : public TextExtractor {
 public:
  explicit PooledTextExtractor(std::vector<std::unique_ptr<TextExtractor>> v)
      : pool_(std::move(v)) {}
  std::vector<OcrSpan> extract_text(const ImageRef& image) const override {
    return pool_.with([&](const TextExtractor& t) { return t.extract_text(image); });
  }

 private:
  InstancePool<TextExtractor> pool_;
};

class PooledReasoner final : public Reasoner {
 public:
  explicit PooledReasoner(std::vector<std::unique_ptr<Reasoner>> v) : pool_(std::move(v)) {}
  ReasonerVerdict reason(const ReasonerInput& input) const override {
    return pool_.with([&](const Reasoner& r) { return r.reason(input); });
  }

 private:
  InstancePool<Reasoner> pool_;
};

template <typename T>
void require_instances(const std::vector<std::unique_ptr<T>>& v) {
  if (v.empty()) throw Error(ErrorCode::InvalidArgument, "instance pool is empty");
  for (const auto& p : v) {
    if (!p) throw Error(ErrorCode::InvalidArgument, "instance pool holds a null backend");
  }
}

}  // namespace

void sort_spans(std::vector<OcrSpan>& spans) {
  std::stable_sort(spans.begin(), spans.end(), [](const OcrSpan& a, const OcrSpan& b) {
    if (a.box.y_min != b.box.y_min) return a.box.y_min < b.box.y_min;
    return a.box.x_min < b.box.x_min;
  });
}

ReasonerVerdict parse_reasoner_response(std::string_view text) {
  std::optional<std::string> verdict, analysis, recommendation;
  std::string* open = nullptr;  // field that absorbs continuation lines

  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    std::string key = colon == std::string::npos ? "" : lower(trim(line.substr(0, colon)));
    std::string value =
        colon == std::string::npos ? "" : std::string(trim(std::string_view(line).substr(colon + 1)));
    if (key == "verdict") {
      verdict = value;
      open = nullptr;
    } else if (key == "analysis") {
      analysis = value;
      open = &*analysis;
    } else if (key == "recommendation") {
      recommendation = value;
      open = nullptr;
    } else if (open != nullptr && !trim(line).empty()) {
      if (!open->empty()) open->push_back(' ');
      open->append(trim(line));
    }
  }

  if (!verdict || !analysis || !recommendation) {
    throw Error(ErrorCode::MalformedResponse,
                "reasoner response lacks one of Verdict/Analysis/Recommendation");
  }
  ReasonerVerdict out;
  try {
    out.verdict = parse_verdict(*verdict);
    out.recommendation = parse_recommendation(*recommendation);
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedResponse, e.what());
  }
  out.analysis = *analysis;
  try {
    validate(out);
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedResponse, e.what());
  }
  return out;
}

CompletionReasoner::CompletionReasoner(CompletionFn complete)
    : complete_(std::move(complete)) {
  if (!complete_) throw Error(ErrorCode::InvalidArgument, "completion function is empty");
}

ReasonerVerdict CompletionReasoner::reason(const ReasonerInput& input) const {
  std::string reply;
  try {
    reply = complete_(input.rendered_payload);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::BackendFailure, e.what());
  }
  return parse_reasoner_response(reply);
}

ConstantClassifier::ConstantClassifier(double probability) : probability_(probability) {
  validate(ClassifierOutput{probability});
}

ClassifierOutput ConstantClassifier::classify(const ImageRef&) const {
  return {probability_};
}

KeywordReasoner::KeywordReasoner(std::vector<std::string> keywords,
                                 std::set<std::string> flagged_labels)
    : flagged_labels_(std::move(flagged_labels)) {
  for (auto& k : keywords) keywords_.push_back(lower(k));
}

ReasonerVerdict KeywordReasoner::reason(const ReasonerInput& input) const {
  std::vector<std::string> hits;
  for (const auto& text : input.extracted_text) {
    const auto t = lower(text);
    for (const auto& k : keywords_) {
      if (!k.empty() && t.find(k) != std::string::npos) hits.push_back("text '" + k + "'");
    }
  }
  for (const auto& [label, confidence] : input.object_labels) {
    if (flagged_labels_.count(label) != 0) {
      hits.push_back(fmt::format("object '{}' ({:.2f})", label, confidence));
    }
  }
  if (hits.empty()) {
    return {Verdict::Safe, "No flagged text or objects found.", Recommendation::Allow};
  }
  std::string analysis = "Flagged signals: ";
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (i != 0) analysis += ", ";
    analysis += hits[i];
  }
  analysis += '.';
  return {Verdict::Unsafe, analysis, Recommendation::Block};
}

BackendSet with_call_counts(const BackendSet& inner, CallCounts& counts) {
  BackendSet out = inner;
  if (inner.classifier) {
    out.classifier = std::make_shared<CountingClassifier>(inner.classifier, counts.classify);
  }
  if (inner.detector) {
    out.detector = std::make_shared<CountingDetector>(inner.detector, counts.detect);
  }
  if (inner.text_extractor) {
    out.text_extractor =
        std::make_shared<CountingTextExtractor>(inner.text_extractor, counts.extract_text);
  }
  if (inner.reasoner) {
    out.reasoner = std::make_shared<ObservedReasoner>(
        inner.reasoner, [&n = counts.reason](const ReasonerInput&) { ++n; });
  }
  return out;
}

BackendSet with_reasoner_observer(const BackendSet& inner,
                                  std::function<void(const ReasonerInput&)> observer) {
  BackendSet out = inner;
  if (inner.reasoner) {
    out.reasoner = std::make_shared<ObservedReasoner>(inner.reasoner, std::move(observer));
  }
  return out;
}

BackendSet with_simulated_costs(const BackendSet& inner, const CallCosts& costs,
                                FakeClock& clock) {
  BackendSet out = inner;
  if (inner.classifier) {
    out.classifier =
        std::make_shared<CostedClassifier>(inner.classifier, from_ms(costs.classify_ms), clock);
  }
  if (inner.detector) {
    out.detector =
        std::make_shared<CostedDetector>(inner.detector, from_ms(costs.detect_ms), clock);
  }
  if (inner.text_extractor) {
    out.text_extractor = std::make_shared<CostedTextExtractor>(
        inner.text_extractor, from_ms(costs.extract_text_ms), clock);
  }
  if (inner.reasoner) {
    out.reasoner =
        std::make_shared<CostedReasoner>(inner.reasoner, from_ms(costs.reason_ms), clock);
  }
  return out;
}

std::shared_ptr<const Classifier> make_pooled_classifier(
    std::vector<std::unique_ptr<Classifier>> instances) {
  require_instances(instances);
  return std::make_shared<PooledClassifier>(std::move(instances));
}

std::shared_ptr<const Detector> make_pooled_detector(
    std::vector<std::unique_ptr<Detector>> instances) {
  require_instances(instances);
  return std::make_shared<PooledDetector>(std::move(instances));
}

std::shared_ptr<const TextExtractor> make_pooled_text_extractor(
    std::vector<std::unique_ptr<TextExtractor>> instances) {
  require_instances(instances);
  return std::make_shared<PooledTextExtractor>(std::move(instances));
}

std::shared_ptr<const Reasoner> make_pooled_reasoner(
    std::vector<std::unique_ptr<Reasoner>> instances) {
  require_instances(instances);
  return std::make_shared<PooledReasoner>(std::move(instances));
}

// ---- clocks ----

Nanos from_ms(double ms) { return Nanos(static_cast<std::int64_t>(std::llround(ms * 1e6))); }

Nanos SteadyClock::now() const {
  return std::chrono::duration_cast<Nanos>(
      std::chrono::steady_clock::now().time_since_epoch());
}

const Clock& steady_clock() {
  static const SteadyClock clock;
  return clock;
}

}  // namespace modcascade
