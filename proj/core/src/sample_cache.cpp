#include "nextmin/sample_cache.hpp"

#include <unordered_map>
#include <unordered_set>

#include "nextmin/error.hpp"
#include "nextmin/random.hpp"

namespace nextmin {

namespace {

std::string to_bitstring(std::span<const std::uint8_t> bits) {
  std::string s(bits.size(), '0');
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) s[i] = '1';
  }
  return s;
}

std::vector<std::uint8_t> from_bitstring(const std::string& s) {
  std::vector<std::uint8_t> bits(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '0' && s[i] != '1') throw Error(ErrorCode::corrupt, "bad bit string in sample cache");
    bits[i] = s[i] == '1';
  }
  return bits;
}

Json range_to_json(const FeatureRange& r) {
  return {{"min", r.min}, {"max", r.max}, {"degenerate", r.degenerate}};
}

FeatureRange range_from_json(const Json& j) {
  return {j.at("min").get<double>(), j.at("max").get<double>(), j.at("degenerate").get<bool>()};
}

}  // namespace

Json normalizer_to_json(const NormalizerStats& stats) {
  Json stat = Json::object();
  for (std::size_t f = 0; f < stats.static_numeric.size(); ++f) {
    stat[std::string(kStaticNumericFields.at(f).name)] = range_to_json(stats.static_numeric[f]);
  }
  Json dyn = Json::object();
  for (std::size_t f = 0; f < stats.dynamic_numeric.size(); ++f) {
    dyn[std::string(kDynamicNumericFields.at(f).name)] = range_to_json(stats.dynamic_numeric[f]);
  }
  return {{"static", stat}, {"dynamic", dyn}, {"timestamp", range_to_json(stats.timestamp)}};
}

NormalizerStats normalizer_from_json(const Json& j) {
  NormalizerStats stats;
  for (const auto& f : kStaticNumericFields) {
    stats.static_numeric.push_back(range_from_json(j.at("static").at(std::string(f.name))));
  }
  for (const auto& f : kDynamicNumericFields) {
    stats.dynamic_numeric.push_back(range_from_json(j.at("dynamic").at(std::string(f.name))));
  }
  stats.timestamp = range_from_json(j.at("timestamp"));
  return stats;
}

Json split_to_json(const DatasetSplit& split) {
  return {{"train", split.train}, {"validation", split.validation}, {"test", split.test},
          {"seed", split.seed}};
}

DatasetSplit split_from_json(const Json& j) {
  return {j.at("train").get<std::vector<std::string>>(),
          j.at("validation").get<std::vector<std::string>>(),
          j.at("test").get<std::vector<std::string>>(), j.at("seed").get<std::uint64_t>()};
}

std::vector<Sample> SampleCache::select(std::span<const std::string> case_ids) const {
  std::unordered_map<std::string, std::vector<const Sample*>> by_case;
  for (const auto& s : samples) by_case[s.case_id].push_back(&s);
  std::vector<Sample> out;
  for (const auto& id : case_ids) {
    auto it = by_case.find(id);
    if (it == by_case.end()) throw Error(ErrorCode::not_found, "case '" + id + "' not in sample cache");
    for (const auto* s : it->second) out.push_back(*s);
  }
  return out;
}

SampleCache preprocess(const Corpus& corpus, std::size_t k, std::uint64_t seed,
                       const ContextMask& mask, std::array<unsigned, 3> ratio) {
  SampleCache cache;
  cache.seed = seed;
  cache.k = k;
  cache.mask = mask;
  cache.manifest = corpus.manifest;
  cache.split = split_cases(corpus.cases, ratio, seed);

  std::unordered_set<std::string> train_ids(cache.split.train.begin(), cache.split.train.end());
  std::vector<CaseLog> train;
  for (const auto& c : corpus.cases) {
    if (train_ids.count(c.case_id)) train.push_back(c);
  }
  cache.stats = fit_normalizer(train);

  const auto encoder = cache.encoder();
  for (const auto& c : corpus.cases) {
    auto samples = encoder.sample_case(c);
    cache.samples.insert(cache.samples.end(), std::make_move_iterator(samples.begin()),
                         std::make_move_iterator(samples.end()));
  }
  return cache;
}

Json sample_cache_to_json(const SampleCache& cache) {
  Json samples = Json::array();
  for (const auto& s : cache.samples) {
    samples.push_back({
        {"case_id", s.case_id},
        {"minute", s.minute},
        {"static", s.static_vec},
        {"dynamic", s.dynamic_vec},
        {"last_k", s.last_k_ids},
        {"long_range", to_bitstring(s.long_range_vec)},
        {"timestamp", s.timestamp_scalar},
        {"label", to_bitstring(s.label)},
    });
  }
  return {
      {"kind", "nextmin.sample_cache"},
      {"version", SampleCache::kVersion},
      {"seed", cache.seed},
      {"k", cache.k},
      {"mask", cache.mask.to_string()},
      {"manifest", manifest_to_json(cache.manifest)},
      {"split", split_to_json(cache.split)},
      {"normalizer", normalizer_to_json(cache.stats)},
      {"samples", std::move(samples)},
  };
}

SampleCache sample_cache_from_json(const Json& j) {
  if (j.value("kind", "") != "nextmin.sample_cache") {
    throw Error(ErrorCode::corrupt, "not a sample cache");
  }
  if (j.at("version").get<int>() != SampleCache::kVersion) {
    throw Error(ErrorCode::version_mismatch, "unsupported sample cache version");
  }
  SampleCache cache;
  try {
    cache.seed = j.at("seed").get<std::uint64_t>();
    cache.k = j.at("k").get<std::size_t>();
    cache.mask = ContextMask::parse(j.at("mask").get<std::string>());
    cache.manifest = manifest_from_json(j.at("manifest"));
    cache.split = split_from_json(j.at("split"));
    cache.stats = normalizer_from_json(j.at("normalizer"));
    for (const auto& s : j.at("samples")) {
      Sample sample;
      sample.case_id = s.at("case_id").get<std::string>();
      sample.minute = s.at("minute").get<std::int64_t>();
      sample.static_vec = s.at("static").get<std::vector<double>>();
      sample.dynamic_vec = s.at("dynamic").get<std::vector<double>>();
      sample.last_k_ids = s.at("last_k").get<std::vector<std::uint32_t>>();
      sample.long_range_vec = from_bitstring(s.at("long_range").get<std::string>());
      sample.timestamp_scalar = s.at("timestamp").get<double>();
      sample.label = from_bitstring(s.at("label").get<std::string>());
      cache.samples.push_back(std::move(sample));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::corrupt, std::string("sample cache: ") + e.what());
  }
  return cache;
}

void save_sample_cache(const std::filesystem::path& path, const SampleCache& cache) {
  write_text_file(path, sample_cache_to_json(cache).dump() + "\n");
}

SampleCache load_sample_cache(const std::filesystem::path& path) {
  return sample_cache_from_json(read_json_file(path));
}

std::uint64_t cache_hash(const SampleCache& cache) {
  return fnv1a(sample_cache_to_json(cache).dump());
}

}  // namespace nextmin
