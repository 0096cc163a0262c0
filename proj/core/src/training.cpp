#include "nextmin/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "nextmin/error.hpp"
#include "nextmin/metrics.hpp"
#include "nextmin/random.hpp"

namespace nextmin {

void TrainConfig::validate() const {
  if (batch_size < 2) throw Error(ErrorCode::invalid_argument, "batch_size must be at least 2");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::invalid_argument, "learning_rate must be positive");
  if (patience < 1) throw Error(ErrorCode::invalid_argument, "patience must be at least 1");
  if (gamma < 0.0) throw Error(ErrorCode::invalid_argument, "gamma must be non-negative");
  if (embed_dim == 0) throw Error(ErrorCode::invalid_argument, "embed_dim must be positive");
  if (!mask.any()) throw Error(ErrorCode::invalid_argument, "context mask selects no features");
}

std::vector<double> compute_label_weights(const LabelMatrix& train_labels) {
  if (train_labels.rows() == 0) {
    throw Error(ErrorCode::invalid_argument, "label weights need at least one training sample");
  }
  std::vector<double> alpha(train_labels.cols(), 0.0);
  for (std::size_t i = 0; i < train_labels.rows(); ++i) {
    auto row = train_labels.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) alpha[j] += row[j];
  }
  const double n = static_cast<double>(train_labels.rows());
  for (auto& a : alpha) a = std::clamp(1.0 - a / n, 0.01, 0.99);
  return alpha;
}

Json epoch_record_to_json(const EpochRecord& r) {
  const auto now = std::chrono::system_clock::now();
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"validation_loss", r.validation_loss},
          {"validation_weighted_f1", r.validation_weighted_f1},
          {"timestamp_ms", ms}};
}

TrainResult train(const Dataset& train_set, const Dataset& validation_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.size() == 0 || validation_set.size() == 0) {
    throw Error(ErrorCode::invalid_argument, "training and validation sets must be non-empty");
  }
  if (!(train_set.layout == validation_set.layout)) {
    throw Error(ErrorCode::invalid_argument, "training and validation layouts differ");
  }

  ModelShape shape;
  shape.input = train_set.layout;
  shape.n_labels = train_set.labels.cols();
  shape.embed_dim = cfg.embed_dim;
  shape.hidden = cfg.hidden;

  TrainResult result{PredictorModel(shape, cfg.seed), {}, {}};
  result.loss.alpha = compute_label_weights(train_set.labels);
  result.loss.gamma = cfg.gamma;
  auto& model = result.model;

  AdamOptimizer optimizer({cfg.learning_rate}, model.parameters());
  Rng shuffle_rng(derive_seed(cfg.seed, "epoch-shuffle"));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const Batch validation_batch = validation_set.all();
  const ThresholdVector half{std::vector<double>(shape.n_labels, 0.5),
                             std::vector<double>(shape.n_labels, 0.0)};

  double best_loss = std::numeric_limits<double>::infinity();
  double patience_anchor = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  auto best_params = model.parameters();
  auto best_buffers = model.buffers();

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    model.set_mode(Mode::train);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t loss_rows = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      if (len < 2) break;
      const auto rows = std::span(order).subspan(start, len);
      const Batch batch = train_set.batch(rows);
      const LabelMatrix targets = train_set.label_rows(rows);

      ForwardCache cache;
      const Matrix probs = model.forward(batch, &cache);
      auto loss = focal_loss(probs, targets, result.loss);
      if (!std::isfinite(loss.loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch offset " << start
            << " (optimizer step " << optimizer.steps() << ")";
        throw Error(ErrorCode::numeric, msg.str());
      }
      optimizer.step(model.parameters(), model.backward(cache, loss.grad_logits));
      model.reset_pad_row();
      loss_sum += loss.loss * static_cast<double>(len);
      loss_rows += len;
    }

    model.set_mode(Mode::eval);
    const Matrix val_probs = model.predict(validation_batch);
    const double val_loss = focal_loss_value(val_probs, validation_set.labels, result.loss);
    if (!std::isfinite(val_loss)) {
      throw Error(ErrorCode::numeric, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    const auto scores = per_label_f1(decide(val_probs, half), validation_set.labels);

    EpochRecord record{epoch, loss_rows ? loss_sum / static_cast<double>(loss_rows) : 0.0, val_loss,
                       weighted_f1(scores)};
    result.history.train_loss.push_back(record.train_loss);
    result.history.validation_loss.push_back(record.validation_loss);
    result.history.validation_weighted_f1.push_back(record.validation_weighted_f1);
    if (on_epoch) on_epoch(record);

    if (val_loss < best_loss) {
      best_loss = val_loss;
      best_params = model.parameters();
      best_buffers = model.buffers();
      result.history.best_epoch = epoch;
    }
    if (val_loss < patience_anchor - cfg.min_delta) {
      patience_anchor = val_loss;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }

  model.parameters() = std::move(best_params);
  model.buffers() = std::move(best_buffers);
  model.set_mode(Mode::eval);
  return result;
}

}  // namespace nextmin
