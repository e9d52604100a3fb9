#include "modcascade/subsets.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

#include <fmt/core.h>
#include <json.hpp>

#include "modcascade/error.hpp"

namespace modcascade {
namespace {

using json = nlohmann::json;

std::string normalize(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '_' || c == '-' || c == ' ' || c == '+') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

ImageRecord parse_record(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "record must be a JSON object");
  static const std::vector<std::string> fields = {"id", "label", "text_present", "text_primary",
                                                  "source"};
  for (const auto& [k, _] : j.items()) {
    if (std::find(fields.begin(), fields.end(), k) == fields.end()) {
      throw Error(ErrorCode::ParseError, fmt::format("unknown field '{}'", k));
    }
  }
  for (const auto& f : fields) {
    if (!j.contains(f)) throw Error(ErrorCode::ParseError, fmt::format("missing field '{}'", f));
  }
  const auto& id = j.at("id");
  const auto& label = j.at("label");
  const auto& source = j.at("source");
  const auto& present = j.at("text_present");
  const auto& primary = j.at("text_primary");
  if (!id.is_string() || id.get<std::string>().empty()) {
    throw Error(ErrorCode::ParseError, "'id' must be a non-empty string");
  }
  if (!label.is_string() || !source.is_string()) {
    throw Error(ErrorCode::ParseError, "'label' and 'source' must be strings");
  }
  if (!present.is_boolean() || !primary.is_boolean()) {
    throw Error(ErrorCode::ParseError, "'text_present' and 'text_primary' must be booleans");
  }
  ImageRecord r;
  r.id = id.get<std::string>();
  try {
    r.label = parse_verdict(label.get<std::string>());
    r.source = parse_source(source.get<std::string>());
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  r.text_present = present.get<bool>();
  r.text_primary = primary.get<bool>();
  if (r.text_primary && !r.text_present) {
    throw Error(ErrorCode::InvariantViolation,
                fmt::format("record '{}' has text_primary without text_present", r.id));
  }
  return r;
}

}  // namespace

std::string_view to_string(Source s) {
  switch (s) {
    case Source::UnsafeBenchSexual: return "unsafebench_sexual";
    case Source::PassControl: return "pass_control";
    case Source::Other: return "other";
  }
  return "other";
}

Source parse_source(std::string_view s) {
  const auto n = normalize(s);
  if (n == "unsafebenchsexual") return Source::UnsafeBenchSexual;
  if (n == "passcontrol") return Source::PassControl;
  if (n == "other") return Source::Other;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown source '{}'", s));
}

std::string_view to_string(SubsetKind k) {
  switch (k) {
    case SubsetKind::Full: return "full";
    case SubsetKind::TextVisual: return "text_visual";
    case SubsetKind::TextOnly: return "text_only";
    case SubsetKind::ControlSafe: return "control_safe";
  }
  return "full";
}

SubsetKind parse_subset_kind(std::string_view s) {
  const auto n = normalize(s);
  if (n == "full") return SubsetKind::Full;
  if (n == "textvisual") return SubsetKind::TextVisual;
  if (n == "textonly") return SubsetKind::TextOnly;
  if (n == "controlsafe" || n == "control") return SubsetKind::ControlSafe;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown subset kind '{}'", s));
}

DatasetManifest parse_manifest(std::istream& in) {
  DatasetManifest m;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  bool seen_record = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, fmt::format("invalid JSON: {}", e.what()));
      }
      if (!seen_record && j.is_object() && j.contains("schema")) {
        if (j.at("schema") != kManifestSchema || j.value("version", 0) != 1) {
          throw Error(ErrorCode::ParseError, "unsupported manifest schema header");
        }
        m.name = j.value("name", "");
        seen_record = true;
        continue;
      }
      seen_record = true;
      auto r = parse_record(j);
      if (!ids.insert(r.id).second) {
        throw Error(ErrorCode::DuplicateId, fmt::format("duplicate id '{}'", r.id));
      }
      m.records.push_back(std::move(r));
    } catch (const Error& e) {
      throw e.with_line(line_no);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, e.what()).with_line(line_no);
    }
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open manifest '{}'", path.string()));
  auto m = parse_manifest(in);
  if (m.name.empty()) m.name = path.stem().string();
  return m;
}

std::string write_manifest(const DatasetManifest& m) {
  std::string out =
      json{{"schema", kManifestSchema}, {"version", 1}, {"name", m.name}}.dump() + '\n';
  for (const auto& r : m.records) {
    json j = {{"id", r.id},
              {"label", to_string(r.label)},
              {"text_present", r.text_present},
              {"text_primary", r.text_primary},
              {"source", to_string(r.source)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

DatasetManifest filter_subset(const DatasetManifest& m, SubsetKind kind) {
  DatasetManifest out;
  out.name = kind == SubsetKind::Full ? m.name : fmt::format("{}:{}", m.name, to_string(kind));
  for (const auto& r : m.records) {
    bool keep = false;
    switch (kind) {
      case SubsetKind::Full: keep = true; break;
      case SubsetKind::TextVisual: keep = r.text_present; break;
      case SubsetKind::TextOnly: keep = r.text_primary; break;
      case SubsetKind::ControlSafe: keep = r.source == Source::PassControl; break;
    }
    if (keep) out.records.push_back(r);
  }
  // Filtering an already filtered manifest keeps its name stable.
  if (kind != SubsetKind::Full && m.name.size() > to_string(kind).size() &&
      m.name.ends_with(fmt::format(":{}", to_string(kind)))) {
    out.name = m.name;
  }
  return out;
}

ClassCounts count_labels(const DatasetManifest& m) {
  ClassCounts c;
  c.total = m.records.size();
  c.unsafe = static_cast<std::size_t>(std::count_if(
      m.records.begin(), m.records.end(), [](const auto& r) { return r.label == Verdict::Unsafe; }));
  c.safe = c.total - c.unsafe;
  return c;
}

CountReport validate_counts(const DatasetManifest& m, const ClassCounts& expected) {
  CountReport rep;
  rep.expected = expected;
  rep.actual = count_labels(m);
  rep.total_ok = rep.actual.total == expected.total;
  rep.unsafe_ok = rep.actual.unsafe == expected.unsafe;
  rep.safe_ok = rep.actual.safe == expected.safe;
  return rep;
}

}  // namespace modcascade
