#pragma once

// Dataset manifests and the text-containing evaluation subsets.
//
// Manifest file: one JSON object per line, blank and '#' lines ignored.
//
//   {"id":"img-0001","label":"Unsafe","text_present":true,
//    "text_primary":false,"source":"unsafebench_sexual"}
//
// All five fields are required; any other field is rejected. `source` is one
// of unsafebench_sexual, pass_control, other. A first line of the form
// {"schema":"modcascade-manifest","version":1,"name":"..."} is optional and
// names the manifest.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "modcascade/types.hpp"

namespace modcascade {

inline constexpr std::string_view kManifestSchema = "modcascade-manifest";

enum class Source { UnsafeBenchSexual, PassControl, Other };

std::string_view to_string(Source s);
Source parse_source(std::string_view s);

struct ImageRecord {
  std::string id;
  Verdict label = Verdict::Safe;
  bool text_present = false;
  bool text_primary = false;  // implies text_present
  Source source = Source::UnsafeBenchSexual;

  bool operator==(const ImageRecord&) const = default;
};

struct DatasetManifest {
  std::string name;
  std::vector<ImageRecord> records;  // canonical iteration order

  bool operator==(const DatasetManifest&) const = default;
};

enum class SubsetKind { Full, TextVisual, TextOnly, ControlSafe };

std::string_view to_string(SubsetKind k);
SubsetKind parse_subset_kind(std::string_view s);

// Throws Error(ParseError | DuplicateId | InvariantViolation) with line number.
DatasetManifest parse_manifest(std::istream& in);
DatasetManifest load_manifest(const std::filesystem::path& path);
std::string write_manifest(const DatasetManifest& m);

DatasetManifest filter_subset(const DatasetManifest& m, SubsetKind kind);

struct ClassCounts {
  std::size_t total = 0;
  std::size_t unsafe = 0;
  std::size_t safe = 0;

  bool operator==(const ClassCounts&) const = default;
};

ClassCounts count_labels(const DatasetManifest& m);

struct CountReport {
  ClassCounts expected;
  ClassCounts actual;
  bool total_ok = false;
  bool unsafe_ok = false;
  bool safe_ok = false;

  bool pass() const { return total_ok && unsafe_ok && safe_ok; }
};

CountReport validate_counts(const DatasetManifest& m, const ClassCounts& expected);

}  // namespace modcascade
