#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nextmin/domain_io.hpp"
#include "nextmin/features.hpp"
#include "nextmin/model.hpp"
#include "nextmin/tensor.hpp"

namespace nextmin {

struct ThresholdChoice {
  double threshold = 1.0;
  double f1 = 0.0;
};

/// Threshold-moving on one label. Candidates are 0, 1 and the midpoints
/// between adjacent distinct sorted scores; a score is positive iff
/// score >= threshold. Returns the F1-maximizing candidate, preferring the
/// largest threshold on ties. With no positives: {1.0, 0.0}.
ThresholdChoice optimal_threshold(std::span<const double> scores,
                                  std::span<const std::uint8_t> labels);

/// F1 from confusion counts; 0 when the denominator is 0.
double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) noexcept;

struct ThresholdVector {
  std::vector<double> thresholds;
  std::vector<double> validation_f1;

  std::size_t size() const noexcept { return thresholds.size(); }
  friend bool operator==(const ThresholdVector&, const ThresholdVector&) = default;
};

ThresholdVector calibrate_thresholds(const Matrix& probs, const LabelMatrix& truths);
/// Runs the model once over the validation set, then calibrates each label.
ThresholdVector calibrate_thresholds(const PredictorModel& model, const Dataset& validation);

/// Bit (i, j) = probs(i, j) >= thresholds[j].
LabelMatrix decide(const Matrix& probs, const ThresholdVector& thresholds);

struct LabelScore {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t support = 0;
  double f1 = 0.0;

  friend bool operator==(const LabelScore&, const LabelScore&) = default;
};

std::vector<LabelScore> per_label_f1(const LabelMatrix& preds, const LabelMatrix& truths);

/// Support-weighted mean of per-label F1. Zero-support labels contribute
/// nothing; 0 when total support is 0. `subset` restricts the labels.
double weighted_f1(std::span<const LabelScore> labels,
                   std::optional<std::span<const std::size_t>> subset = std::nullopt);

/// Mean over samples of 2|pred & truth| / (|pred| + |truth|); a sample with
/// both sets empty scores `empty_score`.
double samples_f1(const LabelMatrix& preds, const LabelMatrix& truths, double empty_score = 1.0);

struct EvalReport {
  std::vector<std::string> labels;
  std::vector<LabelScore> per_label;
  double weighted_f1 = 0.0;
  double samples_f1 = 0.0;
  std::size_t samples = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport evaluate_predictions(const LabelMatrix& preds, const LabelMatrix& truths,
                                const ActivityCatalog& catalog, double empty_score = 1.0);

Json eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const Json& j);
/// Fixed-width table: one row per label plus the two summary scores.
std::string render_eval_report(const EvalReport& report);

Json thresholds_to_json(const ThresholdVector& t);
ThresholdVector thresholds_from_json(const Json& j);

}  // namespace nextmin
