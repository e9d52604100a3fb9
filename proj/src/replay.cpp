#include "modcascade/replay.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <json.hpp>

#include "modcascade/error.hpp"

namespace modcascade {
namespace {

using json = nlohmann::json;

class ReplayClassifier final : public Classifier {
 public:
  explicit ReplayClassifier(std::shared_ptr<const ReplayData> d) : d_(std::move(d)) {}
  ClassifierOutput classify(const ImageRef& image) const override {
    auto it = d_->classify.find(image.id);
    if (it == d_->classify.end()) {
      throw Error(ErrorCode::UnknownImage, fmt::format("no replay probability for '{}'", image.id));
    }
    return it->second;
  }

 private:
  std::shared_ptr<const ReplayData> d_;
};

class ReplayDetector final : public Detector {
 public:
  explicit ReplayDetector(std::shared_ptr<const ReplayData> d) : d_(std::move(d)) {}
  std::vector<Detection> detect(const ImageRef& image) const override {
    auto it = d_->detect.find(image.id);
    if (it != d_->detect.end()) return it->second;
    if (!d_->knows_image(image.id)) {
      throw Error(ErrorCode::UnknownImage, fmt::format("unknown replay image '{}'", image.id));
    }
    return {};
  }

 private:
  std::shared_ptr<const ReplayData> d_;
};

class ReplayTextExtractor final : public TextExtractor {
 public:
  explicit ReplayTextExtractor(std::shared_ptr<const ReplayData> d) : d_(std::move(d)) {}
  std::vector<OcrSpan> extract_text(const ImageRef& image) const override {
    auto it = d_->ocr.find(image.id);
    if (it != d_->ocr.end()) return it->second;
    if (!d_->knows_image(image.id)) {
      throw Error(ErrorCode::UnknownImage, fmt::format("unknown replay image '{}'", image.id));
    }
    return {};
  }

 private:
  std::shared_ptr<const ReplayData> d_;
};

class ReplayReasoner final : public Reasoner {
 public:
  explicit ReplayReasoner(std::shared_ptr<const ReplayData> d) : d_(std::move(d)) {}
  ReasonerVerdict reason(const ReasonerInput& input) const override {
    const auto key = payload_hash(input.rendered_payload);
    auto it = d_->reason.find(key);
    if (it == d_->reason.end()) {
      throw Error(ErrorCode::BackendFailure,
                  fmt::format("no replay verdict for payload hash {}", key));
    }
    return it->second;
  }

 private:
  std::shared_ptr<const ReplayData> d_;
};

Error parse_error(const std::string& msg) { return Error(ErrorCode::ParseError, msg); }

void require_fields(const json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view where) {
  if (!obj.is_object()) throw parse_error(fmt::format("{} must be an object", where));
  for (const auto& [k, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw parse_error(fmt::format("unknown field '{}' in {}", k, where));
    }
  }
}

double get_number(const json& obj, const char* field, std::string_view where) {
  auto it = obj.find(field);
  if (it == obj.end() || !it->is_number()) {
    throw parse_error(fmt::format("{} needs numeric '{}'", where, field));
  }
  return it->get<double>();
}

std::string get_string(const json& obj, const char* field, std::string_view where) {
  auto it = obj.find(field);
  if (it == obj.end() || !it->is_string()) {
    throw parse_error(fmt::format("{} needs string '{}'", where, field));
  }
  return it->get<std::string>();
}

Box parse_box(const json& j) {
  if (!j.is_array() || j.size() != 4 ||
      !std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_number(); })) {
    throw parse_error("box must be an array of four numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json box_json(const Box& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

// Converts enum-parse failures into ParseError so line numbers attach cleanly.
template <typename Fn>
auto parse_enum(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw parse_error(e.what());
  }
}

CallCosts parse_costs(const json& j) {
  require_fields(j, {"classify", "detect", "ocr", "reason"}, "costs_ms");
  CallCosts c;
  if (j.contains("classify")) c.classify_ms = get_number(j, "classify", "costs_ms");
  if (j.contains("detect")) c.detect_ms = get_number(j, "detect", "costs_ms");
  if (j.contains("ocr")) c.extract_text_ms = get_number(j, "ocr", "costs_ms");
  if (j.contains("reason")) c.reason_ms = get_number(j, "reason", "costs_ms");
  for (double v : {c.classify_ms, c.detect_ms, c.extract_text_ms, c.reason_ms}) {
    if (!(v >= 0.0)) throw Error(ErrorCode::InvariantViolation, "cost must be >= 0");
  }
  return c;
}

struct Loader {
  ReplayData data;
  std::set<std::pair<std::string, std::string>> seen;
  std::map<std::string, std::size_t> model_index;
  // Scores may precede their model declaration; resolved after the pass.
  std::vector<std::tuple<std::size_t, std::string, std::string, double>> pending_scores;

  void claim(const std::string& kind, const std::string& key) {
    if (!seen.emplace(kind, key).second) {
      throw parse_error(fmt::format("duplicate key '{}' for kind '{}'", key, kind));
    }
  }

  void row(const json& j, std::size_t line) {
    if (!j.is_object()) throw parse_error("record must be a JSON object");
    const auto kind = get_string(j, "kind", "record");
    const auto key = get_string(j, "key", "record");
    if (key.empty()) throw parse_error("record key is empty");
    if (!j.contains("value")) throw parse_error("record needs 'value'");
    const json& v = j.at("value");

    if (kind == "score") {
      require_fields(j, {"kind", "key", "model", "value"}, "score record");
    } else {
      require_fields(j, {"kind", "key", "value"}, "record");
    }

    if (kind == "header") {
      require_fields(v, {"version"}, "header");
      if (key != kReplaySchema) throw parse_error(fmt::format("unexpected schema '{}'", key));
      const auto version = get_number(v, "version", "header");
      if (version != kReplayVersion) {
        throw parse_error(fmt::format("unsupported replay version {}", version));
      }
      claim(kind, key);
    } else if (kind == "classify") {
      require_fields(v, {"probability"}, "classify value");
      ClassifierOutput out{get_number(v, "probability", "classify value")};
      validate(out);
      claim(kind, key);
      data.classify.emplace(key, out);
    } else if (kind == "detect") {
      require_fields(v, {"detections"}, "detect value");
      if (!v.contains("detections") || !v.at("detections").is_array()) {
        throw parse_error("detect value needs array 'detections'");
      }
      std::vector<Detection> dets;
      for (const auto& d : v.at("detections")) {
        require_fields(d, {"label", "confidence", "box"}, "detection");
        if (!d.contains("box")) throw parse_error("detection needs 'box'");
        Detection det{get_string(d, "label", "detection"),
                      get_number(d, "confidence", "detection"), parse_box(d.at("box"))};
        validate(det);
        dets.push_back(std::move(det));
      }
      claim(kind, key);
      data.detect.emplace(key, std::move(dets));
    } else if (kind == "ocr") {
      require_fields(v, {"spans"}, "ocr value");
      if (!v.contains("spans") || !v.at("spans").is_array()) {
        throw parse_error("ocr value needs array 'spans'");
      }
      std::vector<OcrSpan> spans;
      for (const auto& s : v.at("spans")) {
        require_fields(s, {"text", "box"}, "span");
        if (!s.contains("box")) throw parse_error("span needs 'box'");
        OcrSpan span{get_string(s, "text", "span"), parse_box(s.at("box"))};
        validate(span);
        spans.push_back(std::move(span));
      }
      sort_spans(spans);
      claim(kind, key);
      data.ocr.emplace(key, std::move(spans));
    } else if (kind == "reason") {
      require_fields(v, {"verdict", "analysis", "recommendation"}, "reason value");
      ReasonerVerdict rv;
      rv.verdict = parse_enum([&] { return parse_verdict(get_string(v, "verdict", "reason value")); });
      rv.analysis = get_string(v, "analysis", "reason value");
      rv.recommendation = parse_enum(
          [&] { return parse_recommendation(get_string(v, "recommendation", "reason value")); });
      validate(rv);
      claim(kind, key);
      data.reason.emplace(key, std::move(rv));
    } else if (kind == "cascade") {
      require_fields(v, {"vision_only_name", "multimodal_name", "costs_ms"}, "cascade value");
      CascadeInfo info;
      if (v.contains("vision_only_name")) {
        info.vision_only_name = get_string(v, "vision_only_name", "cascade value");
      }
      if (v.contains("multimodal_name")) {
        info.multimodal_name = get_string(v, "multimodal_name", "cascade value");
      }
      if (v.contains("costs_ms")) info.costs = parse_costs(v.at("costs_ms"));
      claim(kind, key);
      data.cascade = std::move(info);
    } else if (kind == "model") {
      require_fields(v, {"regime", "threshold", "latency_ms"}, "model value");
      ExternalModel m;
      m.name = key;
      m.regime = parse_enum([&] { return parse_regime(get_string(v, "regime", "model value")); });
      if (v.contains("threshold")) m.threshold = get_number(v, "threshold", "model value");
      if (v.contains("latency_ms")) m.latency_ms = get_number(v, "latency_ms", "model value");
      if (!(m.threshold >= 0.0 && m.threshold <= 1.0)) {
        throw Error(ErrorCode::InvariantViolation, "model threshold outside [0,1]");
      }
      if (!(m.latency_ms >= 0.0)) {
        throw Error(ErrorCode::InvariantViolation, "model latency must be >= 0");
      }
      claim(kind, key);
      model_index.emplace(key, data.models.size());
      data.models.push_back(std::move(m));
    } else if (kind == "score") {
      const auto model = get_string(j, "model", "score record");
      require_fields(v, {"probability"}, "score value");
      ClassifierOutput out{get_number(v, "probability", "score value")};
      validate(out);
      claim(kind, model + '\n' + key);
      pending_scores.emplace_back(line, model, key, out.probability);
    } else {
      throw parse_error(fmt::format("unknown record kind '{}'", kind));
    }
  }

  void finish() {
    for (const auto& [line, model, key, p] : pending_scores) {
      auto it = model_index.find(model);
      if (it == model_index.end()) {
        throw parse_error(fmt::format("score for undeclared model '{}'", model)).with_line(line);
      }
      data.models[it->second].scores.emplace(key, p);
    }
  }
};

}  // namespace

std::string payload_hash(std::string_view payload) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : payload) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

double ExternalModel::probability(const std::string& image_id) const {
  auto it = scores.find(image_id);
  if (it == scores.end()) {
    throw Error(ErrorCode::UnknownImage,
                fmt::format("model '{}' has no score for '{}'", name, image_id));
  }
  return it->second;
}

Verdict ExternalModel::predict(const std::string& image_id) const {
  return probability(image_id) >= threshold ? Verdict::Unsafe : Verdict::Safe;
}

bool ReplayData::knows_image(const std::string& id) const {
  return classify.count(id) != 0 || detect.count(id) != 0 || ocr.count(id) != 0;
}

const CascadeInfo& ReplayBackendSet::cascade() const {
  static const CascadeInfo defaults;
  return data->cascade ? *data->cascade : defaults;
}

const ExternalModel* ReplayBackendSet::find_model(std::string_view name) const {
  for (const auto& m : data->models) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

ReplayBackendSet make_replay_backends(ReplayData data) {
  ReplayBackendSet out;
  out.data = std::make_shared<const ReplayData>(std::move(data));
  out.backends.classifier = std::make_shared<ReplayClassifier>(out.data);
  out.backends.detector = std::make_shared<ReplayDetector>(out.data);
  out.backends.text_extractor = std::make_shared<ReplayTextExtractor>(out.data);
  out.backends.reasoner = std::make_shared<ReplayReasoner>(out.data);
  out.backends.accepts_inline_payload = false;
  return out;
}

ReplayBackendSet load_replay(std::istream& in) {
  Loader loader;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw parse_error(fmt::format("invalid JSON: {}", e.what()));
      }
      loader.row(j, line_no);
    } catch (const Error& e) {
      throw e.with_line(line_no);
    } catch (const json::exception& e) {
      throw parse_error(e.what()).with_line(line_no);
    }
  }
  loader.finish();
  return make_replay_backends(std::move(loader.data));
}

ReplayBackendSet load_replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open replay fixture '{}'", path.string()));
  return load_replay(in);
}

std::string write_replay(const ReplayData& data) {
  std::string out;
  auto emit = [&out](const json& j) {
    out += j.dump();
    out += '\n';
  };
  emit({{"kind", "header"}, {"key", kReplaySchema}, {"value", {{"version", kReplayVersion}}}});
  if (data.cascade) {
    const auto& c = *data.cascade;
    emit({{"kind", "cascade"},
          {"key", "cascade"},
          {"value",
           {{"vision_only_name", c.vision_only_name},
            {"multimodal_name", c.multimodal_name},
            {"costs_ms",
             {{"classify", c.costs.classify_ms},
              {"detect", c.costs.detect_ms},
              {"ocr", c.costs.extract_text_ms},
              {"reason", c.costs.reason_ms}}}}}});
  }
  for (const auto& m : data.models) {
    emit({{"kind", "model"},
          {"key", m.name},
          {"value",
           {{"regime", to_string(m.regime)},
            {"threshold", m.threshold},
            {"latency_ms", m.latency_ms}}}});
  }
  for (const auto& [id, c] : data.classify) {
    emit({{"kind", "classify"}, {"key", id}, {"value", {{"probability", c.probability}}}});
  }
  for (const auto& [id, dets] : data.detect) {
    json arr = json::array();
    for (const auto& d : dets) {
      arr.push_back({{"label", d.label}, {"confidence", d.confidence}, {"box", box_json(d.box)}});
    }
    emit({{"kind", "detect"}, {"key", id}, {"value", {{"detections", arr}}}});
  }
  for (const auto& [id, spans] : data.ocr) {
    json arr = json::array();
    for (const auto& s : spans) arr.push_back({{"text", s.text}, {"box", box_json(s.box)}});
    emit({{"kind", "ocr"}, {"key", id}, {"value", {{"spans", arr}}}});
  }
  for (const auto& [key, v] : data.reason) {
    emit({{"kind", "reason"},
          {"key", key},
          {"value",
           {{"verdict", to_string(v.verdict)},
            {"analysis", v.analysis},
            {"recommendation", to_string(v.recommendation)}}}});
  }
  for (const auto& m : data.models) {
    for (const auto& [id, p] : m.scores) {
      emit({{"kind", "score"}, {"key", id}, {"model", m.name}, {"value", {{"probability", p}}}});
    }
  }
  return out;
}

}  // namespace modcascade
