#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nextmin/domain.hpp"

namespace nextmin {

using Json = nlohmann::json;

Json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const Json& j);

Json case_to_json(const CaseLog& c);
/// Parses and validates against the manifest.
CaseLog case_from_json(const Json& j, const DatasetManifest& manifest);

Json static_context_to_json(const StaticContext& s);
StaticContext static_context_from_json(const Json& j);
Json vitals_record_to_json(const DynamicContextRecord& r);
DynamicContextRecord vitals_record_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j, int indent = 1);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Directory layout: manifest.json plus cases/<case_id>.json.
struct Corpus {
  DatasetManifest manifest;
  std::vector<CaseLog> cases;

  const CaseLog* find(std::string_view case_id) const;
};

Corpus load_corpus(const std::filesystem::path& dir);
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);

}  // namespace nextmin
