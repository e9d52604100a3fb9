#include <algorithm>

#include <fmt/core.h>
#include <json.hpp>

#include "modcascade/evalrunner.hpp"

namespace modcascade {
namespace {

using json = nlohmann::json;

std::string pct(const std::optional<double>& v) {
  return v ? fmt::format("{:.2f}", *v) : std::string("n/a");
}

std::string signed_pct(const std::optional<double>& v) {
  return v ? fmt::format("{:+.2f}", *v) : std::string("n/a");
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_num(const std::optional<double>& v, const char* spec) {
  return v ? fmt::format(fmt::runtime(spec), *v) : std::string();
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_double(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string header_line() { return fmt::format("# {} v{}\n", kReportSchema, kReportVersion); }

std::string emit_table(const ReportBundle& b) {
  std::string out = header_line();
  out += fmt::format("{:<28} {:<12} {:<13} {:>6} {:>8} {:>8} {:>8} {:>8} {:>11}\n", "Model",
                     "Regime", "Subset", "N", "Acc(%)", "F1(%)", "Prec(%)", "Rec(%)", "Infer(ms)");
  for (const auto& r : b.reports) {
    out += fmt::format("{:<28} {:<12} {:<13} {:>6} {:>8} {:>8} {:>8} {:>8} {:>11.1f}\n", r.model,
                       to_string(r.regime), to_string(r.subset), r.confusion.total(),
                       pct(r.metrics.accuracy), pct(r.metrics.f1), pct(r.metrics.precision),
                       pct(r.metrics.recall), r.latency.mean_ms);
  }
  for (const auto& d : b.deltas) {
    out += fmt::format("{:<28} {:<12} {:<13} {:>6} {:>8} {:>8} {:>8} {:>8} {:>+11.1f}\n",
                       "Delta Stage 2", "", to_string(d.subset), "", signed_pct(d.d_accuracy),
                       signed_pct(d.d_f1), signed_pct(d.d_precision), signed_pct(d.d_recall),
                       d.d_latency_ms);
    out += fmt::format("  ({} -> {})\n", d.from_model, d.to_model);
  }
  return out;
}

std::string emit_delimited(const ReportBundle& b) {
  std::string out = header_line();
  out +=
      "model,regime,subset,n,tp,fp,tn,fn,accuracy,f1,precision,recall,latency_ms,"
      "stage2_fraction,warmup_discarded,threshold,template_version\n";
  for (const auto& r : b.reports) {
    const auto& c = r.confusion;
    out += fmt::format("{},{},{},{},{},{},{},{},{:.2f},{},{},{},{:.3f},{:.4f},{},{},{}\n",
                       csv_field(r.model), to_string(r.regime), to_string(r.subset), c.total(),
                       c.tp, c.fp, c.tn, c.fn, r.metrics.accuracy, csv_num(r.metrics.f1, "{:.2f}"),
                       csv_num(r.metrics.precision, "{:.2f}"), csv_num(r.metrics.recall, "{:.2f}"),
                       r.latency.mean_ms, r.latency.stage2_fraction, r.latency.warmup_discarded,
                       csv_num(r.threshold, "{}"), csv_field(r.template_version.value_or("")));
  }
  if (!b.deltas.empty()) {
    out += "\n# deltas\n";
    out += "from_model,to_model,subset,d_accuracy,d_f1,d_precision,d_recall,d_latency_ms\n";
    for (const auto& d : b.deltas) {
      out += fmt::format("{},{},{},{},{},{},{},{:+.3f}\n", csv_field(d.from_model),
                         csv_field(d.to_model), to_string(d.subset),
                         csv_num(d.d_accuracy, "{:+.2f}"), csv_num(d.d_f1, "{:+.2f}"),
                         csv_num(d.d_precision, "{:+.2f}"), csv_num(d.d_recall, "{:+.2f}"),
                         d.d_latency_ms);
    }
  }
  return out;
}

json report_json(const EvalReport& r) {
  return {{"model", r.model},
          {"regime", to_string(r.regime)},
          {"subset", to_string(r.subset)},
          {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp},
                         {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}},
          {"metrics", {{"accuracy", r.metrics.accuracy}, {"precision", opt_json(r.metrics.precision)},
                       {"recall", opt_json(r.metrics.recall)}, {"f1", opt_json(r.metrics.f1)}}},
          {"latency", {{"mean_ms", r.latency.mean_ms}, {"count", r.latency.count},
                       {"warmup_discarded", r.latency.warmup_discarded},
                       {"stage2_fraction", r.latency.stage2_fraction}}},
          {"threshold", opt_json(r.threshold)},
          {"template_version", r.template_version ? json(*r.template_version) : json(nullptr)}};
}

json delta_json(const DeltaRow& d) {
  return {{"from_model", d.from_model},      {"to_model", d.to_model},
          {"subset", to_string(d.subset)},   {"d_accuracy", opt_json(d.d_accuracy)},
          {"d_f1", opt_json(d.d_f1)},        {"d_precision", opt_json(d.d_precision)},
          {"d_recall", opt_json(d.d_recall)}, {"d_latency_ms", d.d_latency_ms}};
}

std::string emit_structured(const ReportBundle& b) {
  json root = {{"schema", kReportSchema}, {"version", kReportVersion}};
  root["reports"] = json::array();
  for (const auto& r : b.reports) root["reports"].push_back(report_json(r));
  root["deltas"] = json::array();
  for (const auto& d : b.deltas) root["deltas"].push_back(delta_json(d));
  return root.dump(2) + '\n';
}

}  // namespace

ReportFormat parse_report_format(std::string_view s) {
  if (s == "table" || s == "table_text" || s == "text") return ReportFormat::TableText;
  if (s == "delimited" || s == "csv") return ReportFormat::Delimited;
  if (s == "structured" || s == "json") return ReportFormat::Structured;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown report format '{}'", s));
}

std::string emit_report(const ReportBundle& bundle, ReportFormat format) {
  switch (format) {
    case ReportFormat::TableText: return emit_table(bundle);
    case ReportFormat::Delimited: return emit_delimited(bundle);
    case ReportFormat::Structured: return emit_structured(bundle);
  }
  return {};
}

ReportBundle parse_structured_report(std::string_view text) {
  try {
    const auto root = json::parse(text);
    if (root.at("schema") != kReportSchema || root.at("version") != kReportVersion) {
      throw Error(ErrorCode::ParseError, "not a modcascade report (schema/version mismatch)");
    }
    ReportBundle b;
    for (const auto& j : root.at("reports")) {
      EvalReport r;
      r.model = j.at("model").get<std::string>();
      r.regime = parse_regime(j.at("regime").get<std::string>());
      r.subset = parse_subset_kind(j.at("subset").get<std::string>());
      const auto& c = j.at("confusion");
      r.confusion = {c.at("tp").get<std::int64_t>(), c.at("fp").get<std::int64_t>(),
                     c.at("tn").get<std::int64_t>(), c.at("fn").get<std::int64_t>()};
      const auto& m = j.at("metrics");
      r.metrics.accuracy = m.at("accuracy").get<double>();
      r.metrics.precision = opt_double(m, "precision");
      r.metrics.recall = opt_double(m, "recall");
      r.metrics.f1 = opt_double(m, "f1");
      const auto& l = j.at("latency");
      r.latency.mean_ms = l.at("mean_ms").get<double>();
      r.latency.count = l.at("count").get<std::size_t>();
      r.latency.warmup_discarded = l.at("warmup_discarded").get<std::size_t>();
      r.latency.stage2_fraction = l.at("stage2_fraction").get<double>();
      r.threshold = opt_double(j, "threshold");
      if (j.contains("template_version") && !j.at("template_version").is_null()) {
        r.template_version = j.at("template_version").get<std::string>();
      }
      b.reports.push_back(std::move(r));
    }
    for (const auto& j : root.at("deltas")) {
      DeltaRow d;
      d.from_model = j.at("from_model").get<std::string>();
      d.to_model = j.at("to_model").get<std::string>();
      d.subset = parse_subset_kind(j.at("subset").get<std::string>());
      d.d_accuracy = opt_double(j, "d_accuracy");
      d.d_f1 = opt_double(j, "d_f1");
      d.d_precision = opt_double(j, "d_precision");
      d.d_recall = opt_double(j, "d_recall");
      d.d_latency_ms = j.at("d_latency_ms").get<double>();
      b.deltas.push_back(std::move(d));
    }
    return b;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw;
    throw Error(ErrorCode::ParseError, e.what());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, fmt::format("malformed report: {}", e.what()));
  }
}

PlotData emit_plot_data(const std::vector<EvalReport>& reports) {
  PlotData out;
  out.precision_recall = fmt::format("# modcascade-plot precision_recall v1 guide_pct={}\n",
                                     kPrecisionRecallGuidePct);
  out.precision_recall += "name,precision,recall,regime\n";
  for (const auto& r : reports) {
    if (!r.metrics.precision || !r.metrics.recall) continue;
    out.precision_recall += fmt::format("{},{:.2f},{:.2f},{}\n", csv_field(r.model),
                                        *r.metrics.precision, *r.metrics.recall,
                                        to_string(r.regime));
  }

  std::vector<ParetoPoint> points;
  for (const auto& r : reports) {
    if (r.latency.mean_ms > 0.0) points.push_back({r.model, r.latency.mean_ms, r.metrics.accuracy});
  }
  const auto front = pareto_frontier(points);
  out.pareto = "# modcascade-plot pareto v1\n";
  out.pareto += "name,latency_ms,accuracy_pct,frontier_member\n";
  for (const auto& p : points) {
    const bool member = std::find(front.begin(), front.end(), p) != front.end();
    out.pareto += fmt::format("{},{:.3f},{:.2f},{}\n", csv_field(p.name), p.latency_ms, p.accuracy_pct,
                              member ? "true" : "false");
  }
  return out;
}

}  // namespace modcascade
