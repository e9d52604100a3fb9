#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "modcascade/adapters.hpp"
#include "modcascade/error.hpp"
#include "modcascade/fixturegen.hpp"

namespace testsupport {

using namespace modcascade;

inline std::string data_path(const std::string& name) {
  return std::string(MODCASCADE_TEST_DATA_DIR) + "/" + name;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline FixtureSpec load_spec(const std::string& name) {
  return parse_fixture_spec(read_file(data_path(name)));
}

// In-memory backends keyed by image id.
struct MapBackends {
  std::map<std::string, double> probability;
  std::map<std::string, std::vector<Detection>> detections;
  std::map<std::string, std::vector<OcrSpan>> spans;
  ReasonerVerdict verdict{Verdict::Unsafe, "flagged", Recommendation::Block};
};

class MapClassifier final : public Classifier {
 public:
  explicit MapClassifier(std::shared_ptr<const MapBackends> m) : m_(std::move(m)) {}
  ClassifierOutput classify(const ImageRef& image) const override {
    auto it = m_->probability.find(image.id);
    if (it == m_->probability.end()) throw Error(ErrorCode::UnknownImage, "unknown " + image.id);
    return {it->second};
  }

 private:
  std::shared_ptr<const MapBackends> m_;
};

class MapDetector final : public Detector {
 public:
  explicit MapDetector(std::shared_ptr<const MapBackends> m) : m_(std::move(m)) {}
  std::vector<Detection> detect(const ImageRef& image) const override {
    auto it = m_->detections.find(image.id);
    return it == m_->detections.end() ? std::vector<Detection>{} : it->second;
  }

 private:
  std::shared_ptr<const MapBackends> m_;
};

class MapTextExtractor final : public TextExtractor {
 public:
  explicit MapTextExtractor(std::shared_ptr<const MapBackends> m) : m_(std::move(m)) {}
  std::vector<OcrSpan> extract_text(const ImageRef& image) const override {
    auto it = m_->spans.find(image.id);
    return it == m_->spans.end() ? std::vector<OcrSpan>{} : it->second;
  }

 private:
  std::shared_ptr<const MapBackends> m_;
};

class FixedReasoner final : public Reasoner {
 public:
  explicit FixedReasoner(ReasonerVerdict v) : v_(std::move(v)) {}
  ReasonerVerdict reason(const ReasonerInput&) const override { return v_; }

 private:
  ReasonerVerdict v_;
};

class ThrowingReasoner final : public Reasoner {
 public:
  ReasonerVerdict reason(const ReasonerInput&) const override {
    throw Error(ErrorCode::BackendFailure, "reasoner offline");
  }
};

inline BackendSet make_backends(const MapBackends& m) {
  auto shared = std::make_shared<const MapBackends>(m);
  BackendSet b;
  b.classifier = std::make_shared<MapClassifier>(shared);
  b.detector = std::make_shared<MapDetector>(shared);
  b.text_extractor = std::make_shared<MapTextExtractor>(shared);
  b.reasoner = std::make_shared<FixedReasoner>(m.verdict);
  return b;
}

inline OcrSpan span(std::string text, double y = 0.1, double x = 0.1) {
  return {std::move(text), Box{x, y, x + 0.2, y + 0.05}};
}

// Backends that read the inline payload bytes, as a real engine would.
class ByteClassifier final : public Classifier {
 public:
  ClassifierOutput classify(const ImageRef& image) const override {
    unsigned sum = 0;
    if (image.payload) {
      for (auto b : *image.payload) sum += static_cast<unsigned>(b);
    }
    return {static_cast<double>(sum % 1000) / 1000.0};
  }
};

class ByteTextExtractor final : public TextExtractor {
 public:
  std::vector<OcrSpan> extract_text(const ImageRef& image) const override {
    if (!image.payload || image.payload->empty()) return {};
    if (static_cast<unsigned>((*image.payload)[0]) % 2 == 0) return {span("send pics")};
    return {};
  }
};

inline BackendSet make_byte_backends() {
  BackendSet b;
  b.classifier = std::make_shared<ByteClassifier>();
  b.detector = std::make_shared<EmptyDetector>();
  b.text_extractor = std::make_shared<ByteTextExtractor>();
  b.reasoner = std::make_shared<KeywordReasoner>(std::vector<std::string>{"send pics"});
  b.accepts_inline_payload = true;
  return b;
}

}  // namespace testsupport
