#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nextmin/checkpoint.hpp"
#include "nextmin/metrics.hpp"
#include "nextmin/sample_cache.hpp"
#include "nextmin/training.hpp"

namespace nextmin {

struct SplitDatasets {
  Dataset train;
  Dataset validation;
  Dataset test;
};

SplitDatasets make_split_datasets(const SampleCache& cache, const ContextMask& mask);

/// Train, calibrate on validation, evaluate on test.
struct ExperimentResult {
  TrainResult trained;
  ThresholdVector thresholds;
  EvalReport test_report;
  LabelMatrix test_predictions;
  LabelMatrix test_truths;
  double train_seconds = 0.0;
};

ExperimentResult run_experiment(const SampleCache& cache, const TrainConfig& cfg,
                                const EpochCallback& on_epoch = {});

/// Packs a finished experiment for checkpointing.
ModelBundle make_bundle(const SampleCache& cache, const TrainConfig& cfg, const ExperimentResult& r);

// ---------------------------------------------------------------------------
// Ablation

struct AblationArm {
  std::string name;
  ContextMask mask;
  /// Scores reported for the same arm on a private clinical corpus; shown
  /// beside ours for orientation, never compared against.
  double reference_weighted_f1 = 0.0;
  double reference_samples_f1 = 0.0;
};

/// The 12 context combinations in table order.
const std::array<AblationArm, 12>& ablation_arms();

struct AblationRow {
  std::string name;
  std::string mask;
  bool failed = false;
  std::string error;
  double weighted_f1 = 0.0;
  double samples_f1 = 0.0;
  /// Weighted F1 over `AblationConfig::focus_labels`, when given.
  std::optional<double> focus_weighted_f1;
  std::uint64_t seed = 0;
  std::uint64_t cache_hash = 0;
  std::size_t epochs = 0;
  double train_seconds = 0.0;
  double reference_weighted_f1 = 0.0;
  double reference_samples_f1 = 0.0;
};

struct AblationConfig {
  /// Shared by every arm; its mask is replaced per arm.
  TrainConfig train;
  std::size_t jobs = 1;
  std::vector<std::size_t> focus_labels;
};

using ArmCallback = std::function<void(const AblationRow&)>;

/// Runs all 12 arms on the same cache, split and seed. A failing arm is
/// reported as failed; the others still run. Arms run on up to `jobs`
/// threads and only read the cache.
std::vector<AblationRow> run_ablation(const SampleCache& cache, const AblationConfig& cfg,
                                      const ArmCallback& on_arm = {});

Json ablation_to_json(const std::vector<AblationRow>& rows);
std::vector<AblationRow> ablation_from_json(const Json& j);
std::string render_ablation(const std::vector<AblationRow>& rows);

// ---------------------------------------------------------------------------
// Frequency baseline

/// Predicts label i at minute t iff at least half of the training samples at
/// minute min(t, t_max) carry label i.
class FrequencyBaseline {
 public:
  static FrequencyBaseline fit(std::span<const Sample> train_samples);

  std::int64_t max_minute() const noexcept { return static_cast<std::int64_t>(table_.size()) - 1; }
  const LabelVector& predict_minute(std::int64_t minute) const;
  LabelMatrix predict(std::span<const std::int64_t> minutes) const;

 private:
  std::vector<LabelVector> table_;
};

// ---------------------------------------------------------------------------
// Timeline export

enum class Outcome : std::uint8_t { tn, tp, fp, fn };
std::string_view to_string(Outcome o) noexcept;

struct TimelineMinute {
  std::int64_t minute = 0;
  std::vector<std::size_t> predicted;  // label indices, all labels
  std::vector<std::size_t> truth;
  std::vector<Outcome> cells;  // one per exported activity
};

struct TimelineExport {
  std::string case_id;
  double cutoff = 0.5;
  std::vector<std::size_t> labels;  // activities with test F1 > cutoff
  std::vector<std::string> activities;
  std::vector<TimelineMinute> minutes;
};

/// Per-minute predicted and true sets for one case, with outcome cells for
/// the labels whose F1 in `report` exceeds `cutoff`. Requires thresholds.
TimelineExport export_timeline(const Corpus& corpus, std::string_view case_id,
                               const ModelBundle& bundle, const EvalReport& report,
                               double cutoff = 0.5);

Json timeline_to_json(const TimelineExport& t);
/// Text grid: one row per exported activity, one column per minute.
std::string render_timeline(const TimelineExport& t);

}  // namespace nextmin
