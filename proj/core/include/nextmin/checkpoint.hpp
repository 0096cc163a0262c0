#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "nextmin/adam.hpp"
#include "nextmin/features.hpp"
#include "nextmin/metrics.hpp"
#include "nextmin/model.hpp"

namespace nextmin {

/// A trained model plus everything needed to rebuild its inputs.
struct ModelBundle {
  PredictorModel model;
  AdamConfig optimizer;
  double gamma = 2.0;
  ContextMask mask;
  NormalizerStats stats;
  std::uint64_t catalog_hash = 0;
  std::size_t k = 5;
  std::uint64_t sample_seed = 0;
  std::optional<ThresholdVector> thresholds;
};

/// Binary layout, all integers and floats little-endian:
///
///   "NXMNCKPT" | u32 version | u32 0 | u64 header bytes | header JSON
///   | u64 value count | f64 values... | u64 FNV-1a of everything before
///
/// The header describes the architecture and lists tensors (parameters then
/// running statistics) in payload order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ModelBundle& bundle);
ModelBundle decode_checkpoint(std::string_view bytes,
                              std::optional<std::uint64_t> expected_catalog_hash = std::nullopt);

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle);
/// Throws Error(corrupt) for truncated/damaged files, Error(version_mismatch)
/// and Error(catalog_mismatch) when the catalog hash differs from expected.
ModelBundle load_checkpoint(const std::filesystem::path& path,
                            std::optional<std::uint64_t> expected_catalog_hash = std::nullopt);

}  // namespace nextmin
