#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "nextmin/adam.hpp"
#include "nextmin/domain_io.hpp"
#include "nextmin/features.hpp"
#include "nextmin/focal_loss.hpp"
#include "nextmin/model.hpp"

namespace nextmin {

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  double gamma = 2.0;
  std::size_t max_epochs = 300;
  std::size_t patience = 10;
  double min_delta = 1e-5;
  std::uint64_t seed = 0;
  ContextMask mask;
  std::vector<std::size_t> hidden{256, 128};
  std::size_t embed_dim = 16;

  /// Throws Error(invalid_argument) on a violated invariant.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_weighted_f1 = 0.0;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  /// At a fixed 0.5 threshold; calibrated thresholds come later.
  std::vector<double> validation_weighted_f1;
  std::optional<std::size_t> best_epoch;

  std::size_t epochs() const noexcept { return train_loss.size(); }
  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  PredictorModel model;
  TrainHistory history;
  FocalLossConfig loss;
};

/// alpha_i = 1 - (fraction of rows with label i), clamped to [0.01, 0.99].
std::vector<double> compute_label_weights(const LabelMatrix& train_labels);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on the focal loss with early stopping on validation loss.
/// Each epoch reshuffles with a seeded generator and drops a trailing batch
/// smaller than 2. The returned model holds the parameters of the epoch with
/// the lowest validation loss and is in eval mode.
TrainResult train(const Dataset& train_set, const Dataset& validation_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// One line of the training log.
Json epoch_record_to_json(const EpochRecord& record);

}  // namespace nextmin
