// modcascade command-line tool. Data goes to stdout, diagnostics to stderr.
//
// Exit codes: 0 success, 1 a reported finding (infeasible derivation, failed
// model, count mismatch), 2 usage error, 3 I/O or backend error.

#include <pthread.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "modcascade.h"

namespace {

using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFinding = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct Failure {
  int exit_code;
  std::string message;
};

// Owning wrapper for strings returned by the library.
struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { mc_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

void check(mc_status st, const std::string& context) {
  if (st == MC_OK) return;
  const int code = st == MC_ERR_INVALID_ARGUMENT ? kExitUsage : kExitIo;
  throw Failure{code, context + ": " + mc_status_name(st) + ": " + mc_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
};

using Fixtures = Handle<mc_fixtures, mc_fixtures_free>;
using Manifest = Handle<mc_manifest, mc_manifest_free>;
using Server = Handle<mc_server, mc_server_free>;

std::string read_input(const std::string& path) {
  if (path == "-") {
    return std::string(std::istreambuf_iterator<char>(std::cin), {});
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitIo, "cannot open '" + path + "'"};
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_output(const std::string& path, const std::string& data) {
  if (path.empty() || path == "-") {
    std::cout << data;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{kExitIo, "cannot write '" + path + "'"};
  out << data;
  if (!out.flush()) throw Failure{kExitIo, "cannot write '" + path + "'"};
}

void write_plots(const std::string& dir, const std::string& report) {
  OwnedString pr, pareto;
  check(mc_plot_data(report.c_str(), &pr.p, &pareto.p), "plot data");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Failure{kExitIo, "cannot create '" + dir + "': " + ec.message()};
  write_output((std::filesystem::path(dir) / "precision_recall.csv").string(), pr.str());
  write_output((std::filesystem::path(dir) / "pareto.csv").string(), pareto.str());
}

// Routing settings: defaults, then --config, then explicit flags.
struct RoutingOpts {
  std::string config;
  std::optional<double> tau_low;
  std::optional<double> tau_high;
  bool no_text_trigger = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config, "Routing config file (tau_low, tau_high, text_trigger, regime)");
    cmd->add_option("--tau-low", tau_low, "Lower routing threshold [0.30]");
    cmd->add_option("--tau-high", tau_high, "Upper routing threshold [0.70]");
    cmd->add_flag("--no-text-trigger", no_text_trigger, "Do not route images because they contain text");
  }

  // Returns the routing config; `regime` is replaced by the file's regime
  // unless the user gave --regime.
  mc_routing_config get(std::string* regime = nullptr, bool regime_given = true) const {
    mc_routing_config cfg;
    mc_routing_config_default(&cfg);
    if (!config.empty()) {
      OwnedString file_regime;
      check(mc_routing_config_load(config.c_str(), &cfg, &file_regime.p), "loading routing config");
      if (regime && !regime_given) *regime = file_regime.str();
    }
    if (tau_low) cfg.tau_low = *tau_low;
    if (tau_high) cfg.tau_high = *tau_high;
    if (no_text_trigger) cfg.text_trigger = 0;
    return cfg;
  }
};

const std::vector<std::string> kRegimes = {"vision_only", "multimodal"};
const std::vector<std::string> kRegimesOrBoth = {"vision_only", "multimodal", "both"};
const std::vector<std::string> kSubsets = {"full", "text_visual", "text_only", "control_safe"};

int run_moderate(const std::string& fixtures_path, const std::string& image, std::string regime,
                 bool regime_given, const RoutingOpts& routing, bool fake_clock) {
  const auto cfg = routing.get(&regime, regime_given);
  Fixtures f;
  check(mc_fixtures_load(fixtures_path.c_str(), &f.p), "loading fixtures");
  OwnedString out;
  check(mc_moderate(f.p, image.c_str(), regime.c_str(), &cfg, fake_clock ? 1 : 0, &out.p),
        "moderating '" + image + "'");
  std::cout << out.str() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string manifest;
  std::string fixtures;
  std::string regime = "both";
  std::string subset = "full";
  std::string out;
  std::string format = "structured";
  std::string plots;
  std::string clock = "fake";
  int warmup = 3;
  bool parallel = false;
  RoutingOpts routing;
};

mc_eval_options eval_options(const EvalArgs& a) {
  mc_eval_options o;
  mc_eval_options_default(&o);
  o.warmup = a.warmup;
  o.fake_clock = a.clock == "fake" ? 1 : 0;
  o.parallel_models = a.parallel ? 1 : 0;
  o.routing = a.routing.get();
  return o;
}

int run_eval(const EvalArgs& a) {
  Fixtures f;
  Manifest m;
  check(mc_fixtures_load(a.fixtures.c_str(), &f.p), "loading fixtures");
  check(mc_manifest_load(a.manifest.c_str(), &m.p), "loading manifest");
  const auto opts = eval_options(a);
  OwnedString report, failures;
  std::size_t failure_count = 0;
  check(mc_eval(f.p, m.p, a.subset.c_str(), a.regime.c_str(), &opts, &report.p, &failures.p,
                &failure_count),
        "evaluating");
  std::string rendered = report.str();
  if (a.format != "structured" && a.format != "json") {
    OwnedString r;
    check(mc_report_render(report.p, a.format.c_str(), &r.p), "rendering report");
    rendered = r.str();
  }
  write_output(a.out, rendered);
  if (!a.plots.empty()) write_plots(a.plots, report.str());
  if (failure_count > 0) {
    for (const auto& e : json::parse(failures.str())) {
      std::cerr << "model failed: " << e.at("model").get<std::string>() << ": "
                << e.at("code").get<std::string>() << ": " << e.at("message").get<std::string>()
                << '\n';
    }
    return kExitFinding;
  }
  return kExitOk;
}

int run_bench(const EvalArgs& a) {
  Fixtures f;
  Manifest m;
  check(mc_fixtures_load(a.fixtures.c_str(), &f.p), "loading fixtures");
  check(mc_manifest_load(a.manifest.c_str(), &m.p), "loading manifest");
  const auto opts = eval_options(a);
  OwnedString out;
  check(mc_bench(f.p, m.p, a.regime.c_str(), &opts, &out.p), "benchmarking");
  write_output(a.out, out.str());
  return kExitOk;
}

struct DeriveArgs {
  std::int64_t pos = 0;
  std::int64_t neg = 0;
  std::optional<double> accuracy, precision, recall, f1;
  int decimals = 2;
  bool as_json = false;
};

int run_derive(const DeriveArgs& a) {
  mc_metric_query q{};
  if (a.accuracy) q.has_accuracy = 1, q.accuracy = *a.accuracy;
  if (a.precision) q.has_precision = 1, q.precision = *a.precision;
  if (a.recall) q.has_recall = 1, q.recall = *a.recall;
  if (a.f1) q.has_f1 = 1, q.f1 = *a.f1;
  mc_derivation result{};
  OwnedString out;
  check(mc_derive(a.pos, a.neg, &q, a.decimals, &result, &out.p), "deriving");
  const auto j = json::parse(out.str());
  if (a.as_json) {
    std::cout << j.dump(2) << '\n';
  } else {
    const bool infeasible = result == MC_DERIVATION_INFEASIBLE;
    std::cout << "status: " << j.at("status").get<std::string>() << '\n';
    for (const auto& c : j.at("candidates")) {
      std::cout << (infeasible ? "nearest: " : "")
                << "tp=" << c.at("tp").get<std::int64_t>() << " fp=" << c.at("fp").get<std::int64_t>()
                << " tn=" << c.at("tn").get<std::int64_t>() << " fn=" << c.at("fn").get<std::int64_t>();
      if (infeasible) {
        char gap[32];
        std::snprintf(gap, sizeof gap, "%.4f", c.at("max_gap").get<double>());
        std::cout << " max_gap=" << gap;
      }
      std::cout << '\n';
    }
  }
  if (result == MC_DERIVATION_INFEASIBLE) {
    std::cerr << "no confusion matrix reproduces every reported metric\n";
    return kExitFinding;
  }
  return kExitOk;
}

struct SubsetArgs {
  std::string manifest;
  std::string kind = "full";
  std::string out;
  bool counts = false;
  std::optional<std::size_t> expect_total, expect_unsafe, expect_safe;
};

int run_subset(const SubsetArgs& a) {
  Manifest m, sub;
  check(mc_manifest_load(a.manifest.c_str(), &m.p), "loading manifest");
  check(mc_manifest_filter(m.p, a.kind.c_str(), &sub.p), "filtering");
  std::size_t total = 0, unsafe = 0, safe = 0;
  check(mc_manifest_counts(sub.p, &total, &unsafe, &safe), "counting");
  if (a.counts) {
    write_output(a.out, json{{"subset", a.kind}, {"total", total}, {"unsafe", unsafe}, {"safe", safe}}
                            .dump() + "\n");
  } else {
    OwnedString text;
    check(mc_manifest_to_text(sub.p, &text.p), "serializing");
    write_output(a.out, text.str());
  }
  bool ok = true;
  auto expect = [&](const char* what, const std::optional<std::size_t>& want, std::size_t got) {
    if (want && *want != got) {
      std::cerr << a.kind << " " << what << " count is " << got << ", expected " << *want << '\n';
      ok = false;
    }
  };
  expect("total", a.expect_total, total);
  expect("unsafe", a.expect_unsafe, unsafe);
  expect("safe", a.expect_safe, safe);
  return ok ? kExitOk : kExitFinding;
}

struct FixtureGenArgs {
  std::string spec;
  std::optional<std::int64_t> tp, fp, tn, fn;
  std::vector<std::int64_t> stage1;
  std::vector<std::int64_t> text_visual;
  std::vector<std::int64_t> text_only;
  std::optional<std::uint64_t> seed;
  std::string name;
  std::string source;
  std::string manifest_out;
  std::string fixtures_out;
};

int run_fixture_gen(const FixtureGenArgs& a) {
  json spec = json::object();
  if (!a.spec.empty()) {
    try {
      spec = json::parse(read_input(a.spec));
    } catch (const json::exception& e) {
      throw Failure{kExitIo, "malformed spec '" + a.spec + "': " + e.what()};
    }
  }
  const bool any_matrix = a.tp || a.fp || a.tn || a.fn;
  if (any_matrix) {
    if (!(a.tp && a.fp && a.tn && a.fn)) {
      throw Failure{kExitUsage, "--tp, --fp, --tn and --fn must be given together"};
    }
    spec["cascade"]["final"]["full"] = {*a.tp, *a.fp, *a.tn, *a.fn};
  }
  if (!a.stage1.empty()) spec["cascade"]["stage1"]["full"] = a.stage1;
  if (!a.text_visual.empty()) spec["text_visual"] = a.text_visual;
  if (!a.text_only.empty()) spec["text_only"] = a.text_only;
  if (a.seed) spec["seed"] = *a.seed;
  if (!a.name.empty()) spec["name"] = a.name;
  if (!a.source.empty()) spec["source"] = a.source;
  if (!spec.contains("cascade")) {
    throw Failure{kExitUsage, "give a target matrix with --tp/--fp/--tn/--fn or --spec"};
  }
  OwnedString manifest, fixtures;
  check(mc_fixture_generate(spec.dump().c_str(), &manifest.p, &fixtures.p), "generating fixture");
  write_output(a.manifest_out, manifest.str());
  write_output(a.fixtures_out, fixtures.str());
  return kExitOk;
}

struct ServeArgs {
  std::string config;
  std::string listen;
  std::string fixtures;
  std::string regime;
};

int run_serve(const ServeArgs& a) {
  OwnedString cfg_text;
  check(mc_service_config_load(a.config.empty() ? nullptr : a.config.c_str(), &cfg_text.p),
        "loading service config");
  auto cfg = json::parse(cfg_text.str());
  std::string host = cfg.at("host");
  int port = cfg.at("port");
  if (!a.listen.empty()) {
    const auto colon = a.listen.rfind(':');
    if (colon == std::string::npos) throw Failure{kExitUsage, "--listen expects host:port"};
    host = a.listen.substr(0, colon);
    try {
      port = std::stoi(a.listen.substr(colon + 1));
    } catch (const std::exception&) {
      throw Failure{kExitUsage, "--listen expects host:port"};
    }
  }
  const std::string fixtures_path = a.fixtures.empty() ? cfg.at("fixtures").get<std::string>() : a.fixtures;
  if (fixtures_path.empty()) {
    throw Failure{kExitUsage, "no fixtures: pass --fixtures, set MODCASCADE_FIXTURES or use --config"};
  }
  const std::string regime = a.regime.empty() ? cfg.at("regime").get<std::string>() : a.regime;
  const mc_routing_config routing{cfg.at("tau_low"), cfg.at("tau_high"),
                                  cfg.at("text_trigger").get<bool>() ? 1 : 0};

  Fixtures f;
  check(mc_fixtures_load(fixtures_path.c_str(), &f.p), "loading fixtures");
  Server s;
  check(mc_server_create(f.p, &routing, regime.c_str(), fixtures_path.c_str(), &s.p), "creating server");

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  int bound = 0;
  check(mc_server_bind(s.p, host.c_str(), port, &bound), "binding");
  std::cerr << "listening on " << host << ':' << bound << '\n';

  mc_server* raw = s.p;
  std::thread waiter([signals, raw] {
    int sig = 0;
    sigwait(&signals, &sig);
    mc_server_stop(raw);
  });
  waiter.detach();
  check(mc_server_run(s.p), "serving");
  return kExitOk;
}

struct ReportArgs {
  std::string input = "-";
  std::string format = "table";
  std::string out;
  std::string plots;
};

int run_report(const ReportArgs& a) {
  const auto report = read_input(a.input);
  OwnedString rendered;
  check(mc_report_render(report.c_str(), a.format.c_str(), &rendered.p), "rendering report");
  write_output(a.out, rendered.str());
  if (!a.plots.empty()) write_plots(a.plots, report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage content moderation cascade and evaluation harness"};
  app.set_version_flag("--version", std::string(mc_version()));
  app.require_subcommand(1);

  std::string image, fixtures_path, regime = "multimodal";
  RoutingOpts moderate_routing;
  bool moderate_fake_clock = false;
  auto* moderate = app.add_subcommand("moderate", "Moderate one image from replay fixtures");
  moderate->add_option("--image", image, "Image id")->required();
  moderate->add_option("--fixtures", fixtures_path, "Replay fixture file")->required();
  auto* moderate_regime = moderate->add_option("--regime", regime, "vision_only or multimodal")
      ->check(CLI::IsMember(kRegimes))
      ->capture_default_str();
  moderate->add_flag("--fake-clock", moderate_fake_clock, "Report the fixture's simulated costs as timings");
  moderate_routing.add(moderate);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate the cascade and fixture models on a manifest");
  eval->add_option("--manifest", eval_args.manifest, "Manifest file")->required();
  eval->add_option("--fixtures", eval_args.fixtures, "Replay fixture file")->required();
  eval->add_option("--regime", eval_args.regime, "vision_only, multimodal or both")
      ->check(CLI::IsMember(kRegimesOrBoth))
      ->capture_default_str();
  eval->add_option("--subset", eval_args.subset, "full, text_visual, text_only or control_safe")
      ->check(CLI::IsMember(kSubsets))
      ->capture_default_str();
  eval->add_option("--out", eval_args.out, "Report file (default stdout)");
  eval->add_option("--format", eval_args.format, "table, delimited or structured")
      ->check(CLI::IsMember({"table", "delimited", "csv", "structured", "json"}))
      ->capture_default_str();
  eval->add_option("--plots", eval_args.plots, "Directory for plot-data files");
  eval->add_option("--warmup", eval_args.warmup, "Discarded warm-up iterations")->capture_default_str();
  eval->add_option("--clock", eval_args.clock, "real or fake")
      ->check(CLI::IsMember({"real", "fake"}))
      ->capture_default_str();
  eval->add_flag("--parallel", eval_args.parallel, "Evaluate models concurrently");
  eval_args.routing.add(eval);

  EvalArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Measure per-image latency of each model");
  bench->add_option("--manifest", bench_args.manifest, "Manifest file")->required();
  bench->add_option("--fixtures", bench_args.fixtures, "Replay fixture file")->required();
  bench->add_option("--regime", bench_args.regime, "vision_only, multimodal or both")
      ->check(CLI::IsMember(kRegimesOrBoth))
      ->capture_default_str();
  bench->add_option("--warmup", bench_args.warmup, "Discarded warm-up iterations")->capture_default_str();
  bench->add_option("--clock", bench_args.clock, "real or fake")
      ->check(CLI::IsMember({"real", "fake"}))
      ->capture_default_str();
  bench->add_option("--out", bench_args.out, "Output file (default stdout)");
  bench_args.routing.add(bench);

  DeriveArgs derive_args;
  auto* derive = app.add_subcommand("derive", "Recover confusion matrices from rounded metrics");
  derive->add_option("--pos", derive_args.pos, "Unsafe-labeled images")->required();
  derive->add_option("--neg", derive_args.neg, "Safe-labeled images")->required();
  derive->add_option("--accuracy", derive_args.accuracy, "Reported accuracy (%)");
  derive->add_option("--precision", derive_args.precision, "Reported precision (%)");
  derive->add_option("--recall", derive_args.recall, "Reported recall (%)");
  derive->add_option("--f1", derive_args.f1, "Reported F1 (%)");
  derive->add_option("--decimals", derive_args.decimals, "Decimals of the reported values")
      ->capture_default_str();
  derive->add_flag("--json", derive_args.as_json, "Print JSON");

  SubsetArgs subset_args;
  auto* subset = app.add_subcommand("subset", "Filter a manifest to an evaluation subset");
  subset->add_option("--manifest", subset_args.manifest, "Manifest file")->required();
  subset->add_option("--kind", subset_args.kind, "full, text_visual, text_only or control_safe")
      ->check(CLI::IsMember(kSubsets))
      ->capture_default_str();
  subset->add_option("--out", subset_args.out, "Output file (default stdout)");
  subset->add_flag("--counts", subset_args.counts, "Print label counts instead of records");
  subset->add_option("--expect-total", subset_args.expect_total, "Expected subset size");
  subset->add_option("--expect-unsafe", subset_args.expect_unsafe, "Expected unsafe count");
  subset->add_option("--expect-safe", subset_args.expect_safe, "Expected safe count");

  FixtureGenArgs gen_args;
  auto* gen = app.add_subcommand("fixture-gen", "Synthesize a manifest and replay fixture");
  gen->add_option("--spec", gen_args.spec, "JSON fixture spec");
  gen->add_option("--tp", gen_args.tp, "Cascade true positives");
  gen->add_option("--fp", gen_args.fp, "Cascade false positives");
  gen->add_option("--tn", gen_args.tn, "Cascade true negatives");
  gen->add_option("--fn", gen_args.fn, "Cascade false negatives");
  gen->add_option("--stage1", gen_args.stage1, "Stage-1 matrix tp fp tn fn")->expected(4)->delimiter(',');
  gen->add_option("--text-visual", gen_args.text_visual, "Text+visual subset size as unsafe,safe")
      ->expected(2)
      ->delimiter(',');
  gen->add_option("--text-only", gen_args.text_only, "Text-only subset size as unsafe,safe")
      ->expected(2)
      ->delimiter(',');
  gen->add_option("--seed", gen_args.seed, "Generator seed");
  gen->add_option("--name", gen_args.name, "Manifest name");
  gen->add_option("--source", gen_args.source, "Record source")
      ->check(CLI::IsMember({"unsafebench_sexual", "pass_control", "other"}));
  gen->add_option("--manifest-out", gen_args.manifest_out, "Manifest output file")->required();
  gen->add_option("--fixtures-out", gen_args.fixtures_out, "Replay fixture output file")->required();

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the HTTP moderation service");
  serve->add_option("--config", serve_args.config, "JSON service config");
  serve->add_option("--listen", serve_args.listen, "host:port (port 0 picks a free port)");
  serve->add_option("--fixtures", serve_args.fixtures, "Replay fixture file");
  serve->add_option("--regime", serve_args.regime, "Default regime")->check(CLI::IsMember(kRegimes));

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Render a structured report");
  report->add_option("--input", report_args.input, "Structured report file, - for stdin")
      ->capture_default_str();
  report->add_option("--format", report_args.format, "table, delimited or structured")
      ->check(CLI::IsMember({"table", "delimited", "csv", "structured", "json"}))
      ->capture_default_str();
  report->add_option("--out", report_args.out, "Output file (default stdout)");
  report->add_option("--plots", report_args.plots, "Directory for plot-data files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*moderate) {
      return run_moderate(fixtures_path, image, regime, moderate_regime->count() > 0,
                          moderate_routing, moderate_fake_clock);
    }
    if (*eval) return run_eval(eval_args);
    if (*bench) return run_bench(bench_args);
    if (*derive) return run_derive(derive_args);
    if (*subset) return run_subset(subset_args);
    if (*gen) return run_fixture_gen(gen_args);
    if (*serve) return run_serve(serve_args);
    if (*report) return run_report(report_args);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}
