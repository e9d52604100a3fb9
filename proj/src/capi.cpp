#include "modcascade.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <sstream>
#include <string>

#include <fmt/core.h>
#include <json.hpp>

#include "modcascade/evalrunner.hpp"
#include "modcascade/fixturegen.hpp"
#include "modcascade/metrics.hpp"
#include "modcascade/pipeline.hpp"
#include "modcascade/replay.hpp"
#include "modcascade/service.hpp"
#include "modcascade/subsets.hpp"

struct mc_fixtures {
  modcascade::ReplayBackendSet replay;
};

struct mc_manifest {
  modcascade::DatasetManifest manifest;
};

struct mc_server {
  std::unique_ptr<modcascade::ModerationService> service;
};

namespace {

using json = nlohmann::json;
namespace mc = modcascade;

thread_local std::string last_error;

mc_status to_status(mc::ErrorCode code) {
  return static_cast<mc_status>(static_cast<int>(code) + 1);
}

template <typename Fn>
mc_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    fn();
    return MC_OK;
  } catch (const mc::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return MC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return MC_ERR_INTERNAL;
  }
}

void require(bool cond, const char* what) {
  if (!cond) throw mc::Error(mc::ErrorCode::InvalidArgument, what);
}

char* dup(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

mc::RoutingConfig routing_from(const mc_routing_config* cfg) {
  mc::RoutingConfig r;
  if (cfg) {
    r.tau_low = cfg->tau_low;
    r.tau_high = cfg->tau_high;
    r.text_trigger = cfg->text_trigger != 0;
  }
  mc::validate(r);
  return r;
}

mc::EvalOptions eval_options(const mc_eval_options& o) {
  require(o.warmup >= 0, "warmup must be non-negative");
  mc::EvalOptions e;
  e.warmup = o.warmup;
  e.parallel_models = o.parallel_models != 0;
  return e;
}

struct RegimeRun {
  mc::Regime regime;
  mc::EvalOutcome outcome;
};

std::vector<RegimeRun> run_regimes(const mc_fixtures* f, const mc_manifest* m, const char* subset,
                                   const char* regime, const mc_eval_options* opts) {
  require(f && m && regime, "fixtures, manifest and regime are required");
  mc_eval_options defaults;
  mc_eval_options_default(&defaults);
  const auto& o = opts ? *opts : defaults;
  const auto cfg = routing_from(&o.routing);
  const auto kind = mc::parse_subset_kind(subset ? subset : "full");
  const auto filtered = mc::filter_subset(m->manifest, kind);

  std::vector<mc::Regime> regimes;
  if (std::string_view(regime) == "both") {
    regimes = {mc::Regime::VisionOnly, mc::Regime::Multimodal};
  } else {
    regimes = {mc::parse_regime(regime)};
  }
  std::vector<RegimeRun> runs;
  for (const auto r : regimes) {
    const auto suite = mc::build_suite(f->replay, r, cfg, o.fake_clock != 0);
    runs.push_back({r, mc::run_eval(suite, filtered, kind, r, eval_options(o))});
  }
  return runs;
}

}  // namespace

extern "C" {

const char* mc_version(void) { return "1.0.0"; }

const char* mc_status_name(mc_status status) {
  if (status == MC_OK) return "Ok";
  if (status == MC_ERR_INTERNAL) return "Internal";
  const int code = static_cast<int>(status) - 1;
  if (code < 0 || code > static_cast<int>(mc::ErrorCode::Io)) return "Unknown";
  return mc::to_string(static_cast<mc::ErrorCode>(code)).data();
}

const char* mc_last_error(void) { return last_error.c_str(); }

void mc_string_free(char* s) { std::free(s); }

mc_status mc_fixtures_load(const char* path, mc_fixtures** out) {
  return guarded([&] {
    require(path && out, "path and out are required");
    *out = new mc_fixtures{mc::load_replay(std::filesystem::path(path))};
  });
}

mc_status mc_fixtures_parse(const char* text, mc_fixtures** out) {
  return guarded([&] {
    require(text && out, "text and out are required");
    std::istringstream in{std::string(text)};
    *out = new mc_fixtures{mc::load_replay(in)};
  });
}

void mc_fixtures_free(mc_fixtures* f) { delete f; }

mc_status mc_manifest_load(const char* path, mc_manifest** out) {
  return guarded([&] {
    require(path && out, "path and out are required");
    *out = new mc_manifest{mc::load_manifest(path)};
  });
}

mc_status mc_manifest_parse(const char* text, mc_manifest** out) {
  return guarded([&] {
    require(text && out, "text and out are required");
    std::istringstream in{std::string(text)};
    *out = new mc_manifest{mc::parse_manifest(in)};
  });
}

void mc_manifest_free(mc_manifest* m) { delete m; }

mc_status mc_manifest_filter(const mc_manifest* m, const char* kind, mc_manifest** out) {
  return guarded([&] {
    require(m && kind && out, "manifest, kind and out are required");
    *out = new mc_manifest{mc::filter_subset(m->manifest, mc::parse_subset_kind(kind))};
  });
}

mc_status mc_manifest_counts(const mc_manifest* m, size_t* total, size_t* unsafe, size_t* safe) {
  return guarded([&] {
    require(m, "manifest is required");
    const auto c = mc::count_labels(m->manifest);
    if (total) *total = c.total;
    if (unsafe) *unsafe = c.unsafe;
    if (safe) *safe = c.safe;
  });
}

mc_status mc_manifest_validate_counts(const mc_manifest* m, size_t total, size_t unsafe,
                                      size_t safe, int* pass) {
  return guarded([&] {
    require(m && pass, "manifest and pass are required");
    *pass = mc::validate_counts(m->manifest, {total, unsafe, safe}).pass() ? 1 : 0;
  });
}

mc_status mc_manifest_to_text(const mc_manifest* m, char** out) {
  return guarded([&] {
    require(m && out, "manifest and out are required");
    *out = dup(mc::write_manifest(m->manifest));
  });
}

void mc_routing_config_default(mc_routing_config* cfg) {
  if (!cfg) return;
  const mc::RoutingConfig d;
  cfg->tau_low = d.tau_low;
  cfg->tau_high = d.tau_high;
  cfg->text_trigger = d.text_trigger ? 1 : 0;
}

mc_status mc_routing_config_load(const char* path, mc_routing_config* cfg, char** regime_out) {
  return guarded([&] {
    require(path && cfg, "path and cfg are required");
    const auto settings = mc::load_routing_settings(path);
    char* regime = regime_out ? dup(std::string(mc::to_string(settings.regime))) : nullptr;
    cfg->tau_low = settings.routing.tau_low;
    cfg->tau_high = settings.routing.tau_high;
    cfg->text_trigger = settings.routing.text_trigger ? 1 : 0;
    if (regime_out) *regime_out = regime;
  });
}

mc_status mc_moderate(const mc_fixtures* f, const char* image_id, const char* regime,
                      const mc_routing_config* cfg, int fake_clock, char** json_out) {
  return guarded([&] {
    require(f && image_id && json_out, "fixtures, image id and out are required");
    const auto routing = routing_from(cfg);
    const auto r = mc::parse_regime(regime ? regime : "multimodal");
    const mc::ImageRef image{image_id, std::nullopt};
    mc::ModerationDecision d;
    if (fake_clock) {
      mc::FakeClock clock;
      const auto costed = mc::with_simulated_costs(f->replay.backends, f->replay.cascade().costs, clock);
      d = mc::moderate(image, costed, routing, r, clock);
    } else {
      d = mc::moderate(image, f->replay.backends, routing, r);
    }
    *json_out = dup(mc::moderation_response_json(mc::to_response(d)));
  });
}

mc_status mc_derive(int64_t positives, int64_t negatives, const mc_metric_query* query,
                    int decimals, mc_derivation* result, char** json_out) {
  return guarded([&] {
    require(query, "query is required");
    mc::MetricQuery q;
    if (query->has_accuracy) q.accuracy = query->accuracy;
    if (query->has_precision) q.precision = query->precision;
    if (query->has_recall) q.recall = query->recall;
    if (query->has_f1) q.f1 = query->f1;
    const auto res = mc::derive_confusion(positives, negatives, q, decimals);
    if (result) *result = static_cast<mc_derivation>(static_cast<int>(res.status));
    if (json_out) {
      json j = {{"status", mc::to_string(res.status)}, {"candidates", json::array()}};
      for (std::size_t i = 0; i < res.matrices.size(); ++i) {
        const auto& cm = res.matrices[i];
        j["candidates"].push_back({{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn},
                                   {"max_gap", res.discrepancy[i].max()}});
      }
      *json_out = dup(j.dump());
    }
  });
}

void mc_eval_options_default(mc_eval_options* opts) {
  if (!opts) return;
  opts->warmup = mc::kDefaultWarmup;
  opts->fake_clock = 1;
  opts->parallel_models = 0;
  mc_routing_config_default(&opts->routing);
}

mc_status mc_eval(const mc_fixtures* f, const mc_manifest* m, const char* subset,
                  const char* regime, const mc_eval_options* opts, char** report_out,
                  char** failures_out, size_t* failure_count) {
  return guarded([&] {
    require(report_out, "report_out is required");
    const auto runs = run_regimes(f, m, subset, regime, opts);
    mc::ReportBundle bundle;
    json failures = json::array();
    for (const auto& run : runs) {
      for (const auto& r : run.outcome.reports) bundle.reports.push_back(r);
      for (const auto& e : run.outcome.failures) {
        failures.push_back({{"model", e.model}, {"code", mc::to_string(e.code)}, {"message", e.message}});
      }
    }
    if (runs.size() == 2) {
      const auto& info = f->replay.cascade();
      const mc::EvalReport* s1 = nullptr;
      const mc::EvalReport* s12 = nullptr;
      for (const auto& r : bundle.reports) {
        if (r.model == info.vision_only_name && r.regime == mc::Regime::VisionOnly) s1 = &r;
        if (r.model == info.multimodal_name && r.regime == mc::Regime::Multimodal) s12 = &r;
      }
      if (s1 && s12) bundle.deltas.push_back(mc::stage2_delta(*s1, *s12));
    }
    const auto text = mc::emit_report(bundle, mc::ReportFormat::Structured);
    if (failure_count) *failure_count = failures.size();
    if (failures_out) *failures_out = dup(failures.dump());
    *report_out = dup(text);
  });
}

mc_status mc_bench(const mc_fixtures* f, const mc_manifest* m, const char* regime,
                   const mc_eval_options* opts, char** json_out) {
  return guarded([&] {
    require(json_out, "json_out is required");
    const auto runs = run_regimes(f, m, "full", regime, opts);
    json rows = json::array();
    for (const auto& run : runs) {
      for (const auto& r : run.outcome.reports) {
        rows.push_back({{"model", r.model},
                        {"regime", mc::to_string(r.regime)},
                        {"mean_ms", r.latency.mean_ms},
                        {"count", r.latency.count},
                        {"warmup_discarded", r.latency.warmup_discarded},
                        {"stage2_fraction", r.latency.stage2_fraction}});
      }
      if (!run.outcome.failures.empty()) {
        const auto& e = run.outcome.failures.front();
        throw mc::Error(e.code, fmt::format("{}: {}", e.model, e.message));
      }
    }
    *json_out = dup(rows.dump(2) + '\n');
  });
}

mc_status mc_report_render(const char* structured_report, const char* format, char** out) {
  return guarded([&] {
    require(structured_report && format && out, "report, format and out are required");
    const auto bundle = mc::parse_structured_report(structured_report);
    *out = dup(mc::emit_report(bundle, mc::parse_report_format(format)));
  });
}

mc_status mc_plot_data(const char* structured_report, char** precision_recall_out,
                       char** pareto_out) {
  return guarded([&] {
    require(structured_report && precision_recall_out && pareto_out,
            "report and both outputs are required");
    const auto bundle = mc::parse_structured_report(structured_report);
    const auto plots = mc::emit_plot_data(bundle.reports);
    char* pr = dup(plots.precision_recall);
    try {
      *pareto_out = dup(plots.pareto);
    } catch (...) {
      std::free(pr);
      throw;
    }
    *precision_recall_out = pr;
  });
}

mc_status mc_fixture_generate(const char* spec_json, char** manifest_out, char** fixture_out) {
  return guarded([&] {
    require(spec_json && manifest_out && fixture_out, "spec and both outputs are required");
    const auto gen = mc::generate_fixture(mc::parse_fixture_spec(spec_json));
    char* manifest = dup(mc::write_manifest(gen.manifest));
    try {
      *fixture_out = dup(mc::write_replay(gen.replay));
    } catch (...) {
      std::free(manifest);
      throw;
    }
    *manifest_out = manifest;
  });
}

mc_status mc_service_config_load(const char* path, char** json_out) {
  return guarded([&] {
    require(json_out, "json_out is required");
    std::optional<std::filesystem::path> p;
    if (path) p = path;
    const auto cfg = mc::load_service_config(p);
    json j = {{"host", cfg.host},
              {"port", cfg.port},
              {"fixtures", cfg.fixtures},
              {"tau_low", cfg.routing.tau_low},
              {"tau_high", cfg.routing.tau_high},
              {"text_trigger", cfg.routing.text_trigger},
              {"regime", mc::to_string(cfg.regime)}};
    *json_out = dup(j.dump());
  });
}

mc_status mc_server_create(const mc_fixtures* f, const mc_routing_config* cfg, const char* regime,
                           const char* label, mc_server** out) {
  return guarded([&] {
    require(f && out, "fixtures and out are required");
    auto snap = std::make_shared<mc::ServiceSnapshot>();
    snap->backends = f->replay.backends;
    snap->routing = routing_from(cfg);
    snap->regime = mc::parse_regime(regime ? regime : "multimodal");
    snap->backend_label = label ? label : "";
    auto s = std::make_unique<mc_server>();
    s->service = std::make_unique<mc::ModerationService>(std::move(snap));
    *out = s.release();
  });
}

mc_status mc_server_bind(mc_server* s, const char* host, int port, int* bound_port) {
  return guarded([&] {
    require(s && host, "server and host are required");
    const int p = s->service->bind(host, port);
    if (bound_port) *bound_port = p;
  });
}

mc_status mc_server_run(mc_server* s) {
  return guarded([&] {
    require(s, "server is required");
    s->service->serve();
  });
}

void mc_server_stop(mc_server* s) {
  if (s) s->service->stop();
}

void mc_server_free(mc_server* s) { delete s; }

}  // extern "C"
