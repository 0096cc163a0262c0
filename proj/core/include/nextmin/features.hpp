#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nextmin/domain.hpp"
#include "nextmin/random.hpp"
#include "nextmin/tensor.hpp"

namespace nextmin {

// ---------------------------------------------------------------------------
// Normalization

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;
  /// No value was present when fitting.
  bool degenerate = false;

  friend bool operator==(const FeatureRange&, const FeatureRange&) = default;
};

/// Min/max per numeric feature, fit on the training split only.
struct NormalizerStats {
  std::vector<FeatureRange> static_numeric;   // manifest order
  std::vector<FeatureRange> dynamic_numeric;  // manifest order
  FeatureRange timestamp;                     // minutes

  friend bool operator==(const NormalizerStats&, const NormalizerStats&) = default;
};

/// Timestamp max is the longest training case in minutes, optionally capped.
NormalizerStats fit_normalizer(std::span<const CaseLog> train_cases,
                               std::optional<double> duration_cap_minutes = std::nullopt);

/// Linear min/max scaling clamped to [0, 1]; min == max maps to 0.
double scale_numeric(double x, const FeatureRange& range);

/// One hot bit per vocabulary entry; an absent value sets the missing token.
std::vector<double> encode_one_hot(const std::optional<std::string>& value,
                                   const Vocabulary& vocabulary);

/// Latest record at or before cutoff_s, or nullptr.
const DynamicContextRecord* carry_forward_vitals(std::span<const DynamicContextRecord> vitals,
                                                 std::int64_t cutoff_s);

/// Embedding ids of the k most recent activity starts before cutoff_s,
/// most-recent-first and PAD-padded. When the last minute holds more than k
/// starts, k of them are drawn uniformly with `rng`.
std::vector<std::uint32_t> select_last_k(std::span<const ActivityEvent> events,
                                         std::int64_t cutoff_s, std::size_t k, Rng& rng);

/// Bit i set iff activity i started before cutoff_s.
std::vector<std::uint8_t> long_range_vector(std::span<const ActivityEvent> events,
                                            std::int64_t cutoff_s, std::size_t n_labels);

// ---------------------------------------------------------------------------
// Samples

struct ContextMask {
  bool use_last_k = true;
  bool use_all_occurred = true;
  bool use_dynamic = true;
  bool use_static = true;
  bool use_timestamp = true;

  static constexpr ContextMask all() { return {}; }
  static constexpr ContextMask none() { return {false, false, false, false, false}; }

  bool any() const noexcept {
    return use_last_k || use_all_occurred || use_dynamic || use_static || use_timestamp;
  }

  /// Comma- or plus-separated block names: last_k, all_occurred, dynamic,
  /// static, timestamp; or "all".
  static ContextMask parse(std::string_view text);
  /// Canonical "last_k+all_occurred+..." form.
  std::string to_string() const;

  friend bool operator==(const ContextMask&, const ContextMask&) = default;
};

struct Sample {
  std::string case_id;
  std::int64_t minute = 0;
  std::vector<double> static_vec;
  std::vector<double> dynamic_vec;
  std::vector<std::uint32_t> last_k_ids;
  std::vector<std::uint8_t> long_range_vec;
  double timestamp_scalar = 0.0;
  LabelVector label;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Where the pooled activity embedding sits inside the model input:
/// [dense head | pooled embedding | dense tail].
struct InputLayout {
  std::size_t head_width = 0;  // static + dynamic blocks
  std::size_t tail_width = 0;  // long-range + timestamp blocks
  std::size_t k = 0;           // ids per row; 0 when the last-k block is masked off

  bool pooled_embedding() const noexcept { return k > 0; }
  std::size_t dense_width() const noexcept { return head_width + tail_width; }

  friend bool operator==(const InputLayout&, const InputLayout&) = default;
};

/// A sample's model-facing features under a mask.
struct FeatureBundle {
  std::vector<double> dense;
  std::vector<std::uint32_t> ids;
};

FeatureBundle assemble_features(const Sample& sample, const ContextMask& mask);

InputLayout input_layout(const ContextMask& mask, std::size_t static_width,
                         std::size_t dynamic_width, std::size_t n_labels, std::size_t k);

/// Encodes patient and process context at one-minute cutoffs. The same
/// encoder backs offline preprocessing and the runtime service.
class FeatureEncoder {
 public:
  FeatureEncoder(DatasetManifest manifest, NormalizerStats stats, std::size_t k,
                 std::uint64_t seed);

  const DatasetManifest& manifest() const noexcept { return manifest_; }
  const NormalizerStats& stats() const noexcept { return stats_; }
  std::size_t k() const noexcept { return k_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t n_labels() const noexcept { return manifest_.catalog.size(); }
  std::size_t static_width() const noexcept;
  std::size_t dynamic_width() const noexcept;

  std::vector<double> encode_static(const StaticContext& s) const;
  /// nullptr encodes as all numerics 0 and the missing fio2 token.
  std::vector<double> encode_dynamic(const DynamicContextRecord* record) const;

  /// Features at cutoff 60 * minute; the label is left empty.
  Sample encode_minute(std::string_view case_id, const StaticContext& static_context,
                       std::span<const DynamicContextRecord> vitals,
                       std::span<const ActivityEvent> events, std::int64_t minute) const;

  /// One sample per minute with next-minute labels.
  std::vector<Sample> sample_case(const CaseLog& c) const;

  InputLayout layout(const ContextMask& mask) const {
    return input_layout(mask, static_width(), dynamic_width(), n_labels(), k_);
  }

 private:
  DatasetManifest manifest_;
  NormalizerStats stats_;
  std::size_t k_;
  std::uint64_t seed_;
};

std::vector<Sample> sample_case(const CaseLog& c, const DatasetManifest& manifest,
                                const NormalizerStats& stats, std::size_t k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Splits and batched datasets

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// Seeded shuffle, then validation and test take floor(N * part / total)
/// cases each (at least one); the remainder goes to train.
DatasetSplit split_cases(std::span<const CaseLog> cases, std::array<unsigned, 3> ratio,
                         std::uint64_t seed);

struct Batch {
  Matrix dense;
  std::vector<std::uint32_t> ids;  // rows * layout.k, row-major
  std::size_t rows() const noexcept { return dense.rows(); }
};

/// Assembled samples packed for training and evaluation.
struct Dataset {
  InputLayout layout;
  Matrix dense;
  std::vector<std::uint32_t> ids;
  LabelMatrix labels;
  std::vector<std::string> case_ids;
  std::vector<std::int64_t> minutes;

  std::size_t size() const noexcept { return dense.rows(); }
  Batch batch(std::span<const std::size_t> rows) const;
  Batch all() const;
  LabelMatrix label_rows(std::span<const std::size_t> rows) const;
};

Dataset build_dataset(std::span<const Sample> samples, const ContextMask& mask,
                      const InputLayout& layout);

Batch make_batch(std::span<const FeatureBundle> bundles, const InputLayout& layout);

}  // namespace nextmin
