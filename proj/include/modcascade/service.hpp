#pragma once

// HTTP front end for the cascade.
//
//   POST /moderate   body: {"image_id": "..."} or {"payload_base64": "..."},
//                    optional "regime" and "config" {tau_low, tau_high,
//                    text_trigger} overrides.
//   GET  /health
//
// Every response carries the header X-Modcascade-Schema. Status codes:
// 200 success, 400 malformed request, 404 unknown image, 502 backend failure
// or unparseable reasoner output, 500 anything else. Errors use the body
// {"error": {"code": "...", "message": "...", "stage": "..."}}.

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modcascade/adapters.hpp"
#include "modcascade/pipeline.hpp"

namespace httplib {
class Server;
}

namespace modcascade {

inline constexpr std::string_view kSchemaHeader = "X-Modcascade-Schema";
inline constexpr std::string_view kModerationSchema = "modcascade-moderation/1";

struct ModerationRequest {
  std::optional<std::string> image_id;
  std::optional<std::vector<std::byte>> payload;
  std::optional<Regime> regime;
  std::optional<RoutingConfig> config;
};

struct ModerationResponse {
  Verdict final_verdict = Verdict::Safe;
  Recommendation recommendation = Recommendation::Allow;
  std::optional<std::string> analysis;  // present iff Stage 2 ran
  RoutingReason routing_reason = RoutingReason::ClearlySafeNoText;
  bool stage2_invoked = false;
  double stage1_probability = 0.0;
  ComponentTimings timings;
  std::string template_version;
};

ModerationResponse to_response(const ModerationDecision& d);

// Throws Error(InvalidArgument) on anything that is not a valid request.
ModerationRequest parse_moderation_request(std::string_view body);
std::string moderation_response_json(const ModerationResponse& r);

// Everything one request needs, swapped atomically on reload.
struct ServiceSnapshot {
  BackendSet backends;
  RoutingConfig routing;
  Regime regime = Regime::Multimodal;
  std::string backend_label;  // e.g. fixture path, reported by /health
};

struct HttpResult {
  int status = 200;
  std::string body;
};

class ModerationService {
 public:
  explicit ModerationService(std::shared_ptr<const ServiceSnapshot> snapshot);
  ~ModerationService();

  ModerationService(const ModerationService&) = delete;
  ModerationService& operator=(const ModerationService&) = delete;

  // Typed entry point; throws Error on failure.
  ModerationResponse moderate(const ModerationRequest& req) const;

  HttpResult handle_moderate(std::string_view body) const;
  HttpResult handle_health() const;

  void reload(std::shared_ptr<const ServiceSnapshot> snapshot);
  std::shared_ptr<const ServiceSnapshot> snapshot() const;

  // Binds the listener; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks serving requests until stop() is called.
  void serve();
  void stop();

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const ServiceSnapshot> snapshot_;
  std::unique_ptr<httplib::Server> server_;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string fixtures;
  RoutingConfig routing;
  Regime regime = Regime::Multimodal;
};

// Reads a JSON service config ({"listen": "host:port", "fixtures": "...",
// "tau_low": .., "tau_high": .., "text_trigger": .., "regime": ".."}), then
// applies MODCASCADE_LISTEN and MODCASCADE_FIXTURES from the environment.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& path);
void apply_listen(ServiceConfig& cfg, std::string_view host_port);

}  // namespace modcascade
