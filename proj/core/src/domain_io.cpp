#include "nextmin/domain_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "nextmin/error.hpp"

namespace nextmin {

namespace fs = std::filesystem;

namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json optional_string(const std::optional<std::string>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> read_number(const Json& j, std::string_view key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) {
    throw Error(ErrorCode::validation, "field '" + std::string(key) + "' must be a number or null");
  }
  return it->get<double>();
}

std::optional<std::string> read_string(const Json& j, std::string_view key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw Error(ErrorCode::validation, "field '" + std::string(key) + "' must be a string or null");
  }
  return it->get<std::string>();
}

template <class T>
T require(const Json& j, std::string_view key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::validation, "missing field '" + std::string(key) + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, "field '" + std::string(key) + "': " + e.what());
  }
}

void check_schema(const Json& j) {
  const int version = require<int>(j, "schema_version");
  if (version != DatasetManifest::kSchemaVersion) {
    throw Error(ErrorCode::version_mismatch,
                "unsupported schema_version " + std::to_string(version));
  }
}

}  // namespace

Json manifest_to_json(const DatasetManifest& m) {
  return Json{
      {"schema_version", DatasetManifest::kSchemaVersion},
      {"catalog", m.catalog.labels()},
      {"vocabularies", {{"injury_type", m.injury_type.values()}, {"fio2", m.fio2.values()}}},
      {"numeric_features", {{"static", m.static_numeric}, {"dynamic", m.dynamic_numeric}}},
  };
}

DatasetManifest manifest_from_json(const Json& j) {
  check_schema(j);
  const auto& vocab = j.at("vocabularies");
  auto m = DatasetManifest::make(ActivityCatalog(require<std::vector<std::string>>(j, "catalog")),
                                 Vocabulary(require<std::vector<std::string>>(vocab, "injury_type")),
                                 Vocabulary(require<std::vector<std::string>>(vocab, "fio2")));
  // The numeric lists fix the feature layout, so they must match the
  // built-in record fields exactly.
  const auto& numeric = j.at("numeric_features");
  if (require<std::vector<std::string>>(numeric, "static") != m.static_numeric ||
      require<std::vector<std::string>>(numeric, "dynamic") != m.dynamic_numeric) {
    throw Error(ErrorCode::validation, "manifest numeric feature lists do not match the record schema");
  }
  return m;
}

Json static_context_to_json(const StaticContext& s) {
  Json j = Json::object();
  for (const auto& f : kStaticNumericFields) j[std::string(f.name)] = optional_number(s.*(f.member));
  j[std::string(kStaticCategoryField)] = optional_string(s.injury_type);
  return j;
}

StaticContext static_context_from_json(const Json& j) {
  StaticContext s;
  for (const auto& f : kStaticNumericFields) s.*(f.member) = read_number(j, f.name);
  s.injury_type = read_string(j, kStaticCategoryField);
  return s;
}

Json vitals_record_to_json(const DynamicContextRecord& r) {
  Json j = Json::object();
  j["t_s"] = r.t_s;
  for (const auto& f : kDynamicNumericFields) j[std::string(f.name)] = optional_number(r.*(f.member));
  j[std::string(kDynamicCategoryField)] = optional_string(r.fio2);
  return j;
}

DynamicContextRecord vitals_record_from_json(const Json& j) {
  DynamicContextRecord r;
  r.t_s = require<std::int64_t>(j, "t_s");
  for (const auto& f : kDynamicNumericFields) r.*(f.member) = read_number(j, f.name);
  r.fio2 = read_string(j, kDynamicCategoryField);
  return r;
}

Json case_to_json(const CaseLog& c) {
  Json vitals = Json::array();
  for (const auto& r : c.vitals) vitals.push_back(vitals_record_to_json(r));
  Json events = Json::array();
  for (const auto& e : c.events) {
    events.push_back({{"label_id", e.label}, {"start_s", e.start_s}, {"end_s", e.end_s}});
  }
  return Json{
      {"schema_version", DatasetManifest::kSchemaVersion},
      {"case_id", c.case_id},
      {"static", static_context_to_json(c.static_context)},
      {"vitals", std::move(vitals)},
      {"events", std::move(events)},
      {"duration_s", c.duration_s},
  };
}

CaseLog case_from_json(const Json& j, const DatasetManifest& manifest) {
  check_schema(j);
  CaseLog c;
  c.case_id = require<std::string>(j, "case_id");
  c.duration_s = require<std::int64_t>(j, "duration_s");
  c.static_context = static_context_from_json(j.at("static"));
  for (const auto& r : j.at("vitals")) c.vitals.push_back(vitals_record_from_json(r));
  for (const auto& e : j.at("events")) {
    c.events.push_back({require<std::size_t>(e, "label_id"), require<std::int64_t>(e, "start_s"),
                        require<std::int64_t>(e, "end_s")});
  }
  return validate_case(std::move(c), manifest);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path.string() + "'");
}

Json read_json_file(const fs::path& path) {
  const auto text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::corrupt, "'" + path.string() + "': " + e.what());
  }
}

void write_json_file(const fs::path& path, const Json& j, int indent) {
  write_text_file(path, j.dump(indent) + "\n");
}

const CaseLog* Corpus::find(std::string_view case_id) const {
  auto it = std::find_if(cases.begin(), cases.end(),
                         [&](const CaseLog& c) { return c.case_id == case_id; });
  return it == cases.end() ? nullptr : &*it;
}

Corpus load_corpus(const fs::path& dir) {
  Corpus corpus;
  corpus.manifest = manifest_from_json(read_json_file(dir / "manifest.json"));
  std::vector<fs::path> files;
  const auto cases_dir = dir / "cases";
  if (!fs::is_directory(cases_dir)) {
    throw Error(ErrorCode::io, "no cases/ directory under '" + dir.string() + "'");
  }
  for (const auto& entry : fs::directory_iterator(cases_dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      corpus.cases.push_back(case_from_json(read_json_file(f), corpus.manifest));
    } catch (const Error& e) {
      throw Error(e.code(), f.filename().string() + ": " + e.what());
    }
  }
  return corpus;
}

void save_corpus(const fs::path& dir, const Corpus& corpus) {
  fs::create_directories(dir / "cases");
  write_json_file(dir / "manifest.json", manifest_to_json(corpus.manifest));
  for (const auto& c : corpus.cases) {
    write_json_file(dir / "cases" / (c.case_id + ".json"), case_to_json(c));
  }
}

}  // namespace nextmin
