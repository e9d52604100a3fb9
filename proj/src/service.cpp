#include "modcascade/service.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <httplib.h>
#include <json.hpp>

#include "modcascade/error.hpp"

namespace modcascade {
namespace {

using json = nlohmann::json;

Error bad_request(const std::string& msg) { return Error(ErrorCode::InvalidArgument, msg); }

std::vector<std::byte> decode_base64(std::string_view s) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+' || c == '-') return 62;
    if (c == '/' || c == '_') return 63;
    return -1;
  };
  std::vector<std::byte> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : s) {
    if (c == '=') break;
    if (c == '\n' || c == '\r') continue;
    const int v = value(c);
    if (v < 0) throw bad_request("payload_base64 is not valid base64");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::byte>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ParseError: return 400;
    case ErrorCode::UnknownImage: return 404;
    case ErrorCode::BackendFailure:
    case ErrorCode::MalformedResponse: return 502;
    default: return 500;
  }
}

std::string error_body(ErrorCode code, std::string_view message, std::optional<Stage> stage) {
  json err = {{"code", to_string(code)}, {"message", message}};
  err["stage"] = stage ? json(to_string(*stage)) : json(nullptr);
  return json{{"error", err}}.dump();
}

}  // namespace

ModerationResponse to_response(const ModerationDecision& d) {
  ModerationResponse r;
  r.final_verdict = d.final_verdict;
  r.recommendation = d.recommendation;
  if (d.stage2) r.analysis = d.stage2->analysis;
  r.routing_reason = d.routing.reason;
  r.stage2_invoked = d.routing.invoke_stage2;
  r.stage1_probability = d.stage1.probability;
  r.timings = d.timings;
  r.template_version = d.template_version;
  return r;
}

ModerationRequest parse_moderation_request(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw bad_request(fmt::format("request body is not JSON: {}", e.what()));
  }
  if (!j.is_object()) throw bad_request("request body must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (k != "image_id" && k != "payload_base64" && k != "regime" && k != "config") {
      throw bad_request(fmt::format("unknown request field '{}'", k));
    }
  }
  ModerationRequest req;
  if (j.contains("image_id")) {
    if (!j["image_id"].is_string() || j["image_id"].get<std::string>().empty()) {
      throw bad_request("image_id must be a non-empty string");
    }
    req.image_id = j["image_id"].get<std::string>();
  }
  if (j.contains("payload_base64")) {
    if (!j["payload_base64"].is_string()) throw bad_request("payload_base64 must be a string");
    req.payload = decode_base64(j["payload_base64"].get<std::string>());
  }
  if (req.image_id.has_value() == req.payload.has_value()) {
    throw bad_request("exactly one of image_id and payload_base64 is required");
  }
  if (j.contains("regime")) {
    if (!j["regime"].is_string()) throw bad_request("regime must be a string");
    req.regime = parse_regime(j["regime"].get<std::string>());
  }
  if (j.contains("config")) {
    const auto& c = j["config"];
    if (!c.is_object()) throw bad_request("config must be an object");
    RoutingConfig cfg;
    try {
      cfg.tau_low = c.value("tau_low", cfg.tau_low);
      cfg.tau_high = c.value("tau_high", cfg.tau_high);
      cfg.text_trigger = c.value("text_trigger", cfg.text_trigger);
    } catch (const json::exception& e) {
      throw bad_request(fmt::format("bad config override: {}", e.what()));
    }
    validate(cfg);
    req.config = cfg;
  }
  return req;
}

std::string moderation_response_json(const ModerationResponse& r) {
  json j = {{"final_verdict", to_string(r.final_verdict)},
            {"recommendation", to_string(r.recommendation)},
            {"routing_reason", to_string(r.routing_reason)},
            {"stage2_invoked", r.stage2_invoked},
            {"stage1_probability", r.stage1_probability},
            {"timings",
             {{"stage1_ms", r.timings.stage1_ms},
              {"ocr_ms", r.timings.ocr_ms},
              {"reasoner_ms", r.timings.reasoner_ms},
              {"total_ms", r.timings.total_ms}}},
            {"template_version", r.template_version}};
  if (r.analysis) j["analysis"] = *r.analysis;
  return j.dump();
}

ModerationService::ModerationService(std::shared_ptr<const ServiceSnapshot> snapshot)
    : snapshot_(std::move(snapshot)) {
  if (!snapshot_) throw Error(ErrorCode::InvalidArgument, "service needs a snapshot");
  validate(snapshot_->routing);
}

ModerationService::~ModerationService() { stop(); }

std::shared_ptr<const ServiceSnapshot> ModerationService::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_;
}

void ModerationService::reload(std::shared_ptr<const ServiceSnapshot> snapshot) {
  if (!snapshot) throw Error(ErrorCode::InvalidArgument, "service needs a snapshot");
  validate(snapshot->routing);
  std::lock_guard lock(mutex_);
  snapshot_ = std::move(snapshot);
}

ModerationResponse ModerationService::moderate(const ModerationRequest& req) const {
  const auto snap = snapshot();
  ImageRef image;
  if (req.payload) {
    if (!snap->backends.accepts_inline_payload) {
      throw bad_request("inline payloads need a real backend set; replay mode accepts image_id only");
    }
    image.id = "inline";
    image.payload = req.payload;
  } else {
    image.id = *req.image_id;
  }
  const auto cfg = req.config.value_or(snap->routing);
  const auto regime = req.regime.value_or(snap->regime);
  return to_response(modcascade::moderate(image, snap->backends, cfg, regime));
}

HttpResult ModerationService::handle_moderate(std::string_view body) const {
  try {
    const auto req = parse_moderation_request(body);
    return {200, moderation_response_json(moderate(req))};
  } catch (const Error& e) {
    return {status_for(e.code()), error_body(e.code(), e.what(), e.stage())};
  } catch (const std::exception& e) {
    return {500, error_body(ErrorCode::BackendFailure, e.what(), std::nullopt)};
  }
}

HttpResult ModerationService::handle_health() const {
  const auto snap = snapshot();
  const auto& b = snap->backends;
  json components = {{"classifier", b.classifier != nullptr},
                     {"detector", b.detector != nullptr},
                     {"text_extractor", b.text_extractor != nullptr},
                     {"reasoner", b.reasoner != nullptr}};
  json missing = json::array();
  for (const auto& [name, present] : components.items()) {
    if (!present.get<bool>()) missing.push_back(name);
  }
  const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  json body = {{"status", missing.empty() ? "healthy" : "degraded"},
               {"components", components},
               {"missing", missing},
               {"backends", snap->backend_label},
               {"inline_payloads", b.accepts_inline_payload},
               {"regime", to_string(snap->regime)},
               {"config",
                {{"tau_low", snap->routing.tau_low},
                 {"tau_high", snap->routing.tau_high},
                 {"text_trigger", snap->routing.text_trigger}}},
               {"template_version", kPayloadTemplateVersion},
               {"schema", kModerationSchema},
               {"timestamp", now}};
  return {200, body.dump()};
}

int ModerationService::bind(const std::string& host, int port) {
  if (server_) throw Error(ErrorCode::InvalidArgument, "service is already bound");
  server_ = std::make_unique<httplib::Server>();
  const std::string schema(kModerationSchema);
  server_->set_default_headers({{std::string(kSchemaHeader), schema}});
  server_->Post("/moderate", [this](const httplib::Request& req, httplib::Response& res) {
    const auto r = handle_moderate(req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  server_->Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    const auto r = handle_health();
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    server_.reset();
    throw Error(ErrorCode::Io, fmt::format("cannot listen on {}:{}", host, port));
  }
  return bound;
}

void ModerationService::serve() {
  if (!server_) throw Error(ErrorCode::InvalidArgument, "service is not bound");
  server_->listen_after_bind();
}

void ModerationService::stop() {
  if (server_) server_->stop();
}

void apply_listen(ServiceConfig& cfg, std::string_view host_port) {
  const auto colon = host_port.rfind(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("listen address '{}' is not host:port", host_port));
  }
  const auto port_str = std::string(host_port.substr(colon + 1));
  char* end = nullptr;
  const long port = std::strtol(port_str.c_str(), &end, 10);
  if (port_str.empty() || *end != '\0' || port < 0 || port > 65535) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("bad port in '{}'", host_port));
  }
  cfg.host = std::string(host_port.substr(0, colon));
  cfg.port = static_cast<int>(port);
}

ServiceConfig load_service_config(const std::optional<std::filesystem::path>& path) {
  ServiceConfig cfg;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open service config '{}'", path->string()));
    try {
      const auto j = json::parse(in);
      if (j.contains("listen")) apply_listen(cfg, j.at("listen").get<std::string>());
      cfg.fixtures = j.value("fixtures", cfg.fixtures);
      cfg.routing.tau_low = j.value("tau_low", cfg.routing.tau_low);
      cfg.routing.tau_high = j.value("tau_high", cfg.routing.tau_high);
      cfg.routing.text_trigger = j.value("text_trigger", cfg.routing.text_trigger);
      if (j.contains("regime")) cfg.regime = parse_regime(j.at("regime").get<std::string>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, fmt::format("malformed service config: {}", e.what()));
    }
  }
  if (const char* listen = std::getenv("MODCASCADE_LISTEN"); listen && *listen) {
    apply_listen(cfg, listen);
  }
  if (const char* fixtures = std::getenv("MODCASCADE_FIXTURES"); fixtures && *fixtures) {
    cfg.fixtures = fixtures;
  }
  validate(cfg.routing);
  return cfg;
}

}  // namespace modcascade
