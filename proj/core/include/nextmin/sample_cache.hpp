#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nextmin/domain_io.hpp"
#include "nextmin/features.hpp"

namespace nextmin {

/// Preprocessed per-minute samples for a whole corpus, together with every
/// input that determined them. Samples carry all context blocks; the mask
/// recorded here is the default for training and can be overridden per run.
struct SampleCache {
  static constexpr int kVersion = 1;

  std::uint64_t seed = 0;
  std::size_t k = 5;
  ContextMask mask;
  DatasetManifest manifest;
  DatasetSplit split;
  NormalizerStats stats;
  std::vector<Sample> samples;

  FeatureEncoder encoder() const { return FeatureEncoder(manifest, stats, k, seed); }

  /// Samples of the given cases, in the order of `case_ids`.
  std::vector<Sample> select(std::span<const std::string> case_ids) const;
};

inline constexpr std::array<unsigned, 3> kDefaultSplitRatio{161, 20, 20};

/// Split the corpus, fit the normalizer on the training cases, sample every case.
SampleCache preprocess(const Corpus& corpus, std::size_t k, std::uint64_t seed,
                       const ContextMask& mask,
                       std::array<unsigned, 3> ratio = kDefaultSplitRatio);

Json sample_cache_to_json(const SampleCache& cache);
SampleCache sample_cache_from_json(const Json& j);

void save_sample_cache(const std::filesystem::path& path, const SampleCache& cache);
SampleCache load_sample_cache(const std::filesystem::path& path);

/// FNV-1a of the canonical serialization; equal hashes mean identical caches.
std::uint64_t cache_hash(const SampleCache& cache);

Json normalizer_to_json(const NormalizerStats& stats);
NormalizerStats normalizer_from_json(const Json& j);
Json split_to_json(const DatasetSplit& split);
DatasetSplit split_from_json(const Json& j);

}  // namespace nextmin
