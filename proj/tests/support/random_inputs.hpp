#pragma once

#include <random>

#include "nextmin/checkpoint.hpp"
#include "nextmin/random.hpp"

namespace nextmin::testing {

/// Batch of uniform dense features and random ids (PAD included) for `layout`.
inline Batch random_batch(const InputLayout& layout, std::size_t n_ids, std::size_t rows,
                          std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> id(0, static_cast<std::uint32_t>(n_ids));
  Batch b;
  b.dense = Matrix(rows, layout.dense_width());
  for (auto& x : b.dense.values()) x = u(rng);
  b.ids.resize(rows * layout.k);
  for (auto& i : b.ids) i = id(rng);
  return b;
}

/// A bundle whose running statistics have moved away from their defaults.
inline ModelBundle warmed_bundle(std::uint64_t seed, std::size_t n_labels = 7) {
  ModelShape shape;
  shape.input = InputLayout{9, n_labels + 1, 4};
  shape.n_labels = n_labels;
  shape.embed_dim = 6;
  shape.hidden = {12, 8};
  ModelBundle b;
  b.model = PredictorModel(shape, seed);
  for (std::uint64_t i = 0; i < 3; ++i) b.model.forward(random_batch(shape.input, n_labels, 16, seed + i));
  b.model.set_mode(Mode::eval);
  b.mask = ContextMask::all();
  b.stats.static_numeric.assign(5, {1.0, 2.0, false});
  b.stats.dynamic_numeric.assign(5, {0.0, 0.0, true});
  b.stats.timestamp = {0.0, 40.0, false};
  b.catalog_hash = 0x1234abcdULL;
  b.k = 4;
  b.sample_seed = seed;
  b.thresholds = ThresholdVector{std::vector<double>(n_labels, 0.25), std::vector<double>(n_labels, 0.5)};
  return b;
}

}  // namespace nextmin::testing
