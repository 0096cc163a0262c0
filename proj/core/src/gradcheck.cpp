#include "nextmin/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nextmin/error.hpp"
#include "nextmin/random.hpp"

namespace nextmin {

GradCheckResult grad_check(PredictorModel& model, const Batch& batch, const LabelMatrix& targets,
                           const FocalLossConfig& loss, const GradCheckOptions& options) {
  if (!(options.step > 0.0) || !std::isfinite(options.step)) {
    throw Error(ErrorCode::invalid_argument, "grad_check step must be positive and finite");
  }
  const Mode saved_mode = model.mode();
  const auto saved_buffers = model.buffers();
  model.set_mode(Mode::train);

  auto loss_at = [&]() {
    return focal_loss_value(model.forward(batch), targets, loss);
  };

  ForwardCache cache;
  const Matrix probs = model.forward(batch, &cache);
  const GradientSet analytic = model.backward(cache, focal_loss(probs, targets, loss).grad_logits);

  struct Coordinate {
    std::size_t tensor;
    std::size_t index;
  };
  std::vector<Coordinate> all;
  auto& params = model.parameters();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].values.size(); ++i) {
      // The PAD row is frozen; it has no gradient by construction.
      if (t == model.embedding_index() && i < params[t].cols) continue;
      all.push_back({t, i});
    }
  }
  std::vector<Coordinate> picked;
  if (all.size() <= options.coordinates) {
    picked = all;
  } else {
    Rng rng(options.seed);
    std::sample(all.begin(), all.end(), std::back_inserter(picked), options.coordinates, rng);
  }

  GradCheckResult result;
  for (const auto& c : picked) {
    double& value = params[c.tensor].values[c.index];
    const double original = value;
    value = original + options.step;
    const double up = loss_at();
    value = original - options.step;
    const double down = loss_at();
    value = original;

    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic[c.tensor][c.index];
    const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
    ++result.checked;
    if (rel >= result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = params[c.tensor].name;
      result.worst_index = c.index;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }

  model.buffers() = saved_buffers;
  model.set_mode(saved_mode);
  return result;
}

GradCheckFixture make_gradcheck_fixture(std::uint64_t seed, std::size_t input_width,
                                        std::vector<std::size_t> hidden, std::size_t n_labels,
                                        std::size_t rows, double gamma, bool with_embedding) {
  ModelShape shape;
  shape.n_labels = n_labels;
  shape.hidden = std::move(hidden);
  if (with_embedding) {
    shape.embed_dim = 4;
    if (input_width <= shape.embed_dim) {
      throw Error(ErrorCode::invalid_argument, "input width too small for the embedding block");
    }
    const std::size_t dense = input_width - shape.embed_dim;
    shape.input.head_width = dense / 2;
    shape.input.tail_width = dense - shape.input.head_width;
    shape.input.k = 3;
  } else {
    shape.input.head_width = input_width;
  }

  Rng rng(derive_seed(seed, "gradcheck"));
  GradCheckFixture f{PredictorModel(shape, seed), {}, LabelMatrix(rows, n_labels), {}};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Embedding rows larger than the N(0, 0.01) init so they matter numerically.
  if (with_embedding) {
    auto& table = f.model.parameters()[f.model.embedding_index()];
    for (auto& v : table.values) v = 0.5 * normal(rng);
    f.model.reset_pad_row();
  }
  f.batch.dense = Matrix(rows, shape.input.dense_width());
  for (auto& v : f.batch.dense.values()) v = unit(rng);
  std::uniform_int_distribution<std::uint32_t> id(0, static_cast<std::uint32_t>(n_labels));
  for (std::size_t i = 0; i < rows * shape.input.k; ++i) f.batch.ids.push_back(id(rng));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < n_labels; ++j) f.targets(i, j) = unit(rng) < 0.4 ? 1 : 0;
  }
  f.loss.gamma = gamma;
  for (std::size_t j = 0; j < n_labels; ++j) f.loss.alpha.push_back(0.1 + 0.8 * unit(rng));
  return f;
}

}  // namespace nextmin
