#include <doctest.h>

#include <algorithm>

#include "nextmin/error.hpp"
#include "nextmin/model.hpp"

using namespace nextmin;

namespace {

Tensor table_4x2() {
  return Tensor{"embedding", 4, 2, {0, 0, 1, 2, 3, 4, 5, 6}};
}

ModelShape small_shape(std::size_t k = 3) {
  ModelShape s;
  s.input = InputLayout{4, 2, k};
  s.n_labels = 3;
  s.embed_dim = 2;
  s.hidden = {6, 4};
  return s;
}

Batch random_batch(std::size_t rows, const ModelShape& s, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> id(0, 3);
  Batch b;
  b.dense = Matrix(rows, s.input.dense_width());
  for (auto& x : b.dense.values()) x = u(rng);
  b.ids.resize(rows * s.input.k);
  for (auto& i : b.ids) i = id(rng);
  return b;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("embedding mean-pool") {
  const auto t = table_4x2();
  CHECK(embed_mean_pool(std::vector<std::uint32_t>{2, 2, 0, 0, 0}, t) == std::vector<double>{3, 4});
  CHECK(embed_mean_pool(std::vector<std::uint32_t>{0, 0, 0, 0, 0}, t) == std::vector<double>{0, 0});
  CHECK(embed_mean_pool(std::vector<std::uint32_t>{1, 3, 0, 0, 0}, t) == std::vector<double>{3, 4});
}

TEST_CASE("pool backward spreads the gradient over contributing rows") {
  const auto t = table_4x2();
  std::vector<double> grad(t.values.size(), 0.0);
  const std::vector<std::uint32_t> ids{1, 3, 3, 0};
  embed_mean_pool_backward(ids, std::vector<double>{3, 6}, t, grad);
  CHECK(grad == std::vector<double>{0, 0, 1, 2, 0, 0, 2, 4});
}

TEST_CASE("zero parameters give probability one half") {
  PredictorModel model(small_shape(), 1);
  for (auto& p : model.parameters()) std::fill(p.values.begin(), p.values.end(), 0.0);
  model.set_mode(Mode::eval);
  const auto probs = model.predict(random_batch(4, model.shape(), 3));
  for (double p : probs.values()) CHECK(p == 0.5);
}

TEST_CASE("output shape and eval determinism") {
  ModelShape s;
  s.input = InputLayout{20, 62, 5};
  s.n_labels = 61;
  PredictorModel model(s, 7);
  model.set_mode(Mode::eval);
  const auto b = random_batch(64, s, 11);
  const auto p1 = model.predict(b);
  CHECK(p1.rows() == 64);
  CHECK(p1.cols() == 61);
  CHECK(model.predict(b) == p1);
  for (double p : p1.values()) {
    CHECK(p >= kProbabilityFloor);
    CHECK(p <= 1.0 - kProbabilityFloor);
  }
}

TEST_CASE("train-mode forward updates running statistics with momentum") {
  PredictorModel model(small_shape(), 3);
  const auto before = model.buffers();
  const auto b = random_batch(8, model.shape(), 5);
  ForwardCache cache;
  model.forward(b, &cache);
  CHECK(cache.valid);
  CHECK(model.buffers() != before);

  // The first running mean moves 10% of the way towards the batch mean.
  // Batch-norm input of unit 0 is the first linear layer's output.
  const auto& x = cache.layers[0].input;
  const auto w = std::find_if(model.parameters().begin(), model.parameters().end(),
                              [](const Tensor& t) { return t.name.ends_with(".weight"); });
  REQUIRE(w != model.parameters().end());
  const auto& bias = *(w + 1);
  double mean0 = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double z = bias.values[0];
    for (std::size_t i = 0; i < x.cols(); ++i) z += x(r, i) * w->values[i * w->cols];
    mean0 += z;
  }
  mean0 /= static_cast<double>(x.rows());
  const double expected = 0.9 * before[0].values[0] + 0.1 * mean0;
  CHECK(model.buffers()[0].values[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("a zero upstream gradient gives zero parameter gradients") {
  PredictorModel model(small_shape(), 4);
  ForwardCache cache;
  const auto probs = model.forward(random_batch(5, model.shape(), 6), &cache);
  const auto grads = model.backward(cache, Matrix(probs.rows(), probs.cols(), 0.0));
  for (const auto& g : grads) {
    for (double x : g) CHECK(x == 0.0);
  }
}

TEST_CASE("PAD row starts and stays at zero after reset") {
  PredictorModel model(small_shape(), 9);
  const auto idx = model.embedding_index();
  REQUIRE(idx != PredictorModel::npos);
  auto& table = model.parameters()[idx];
  for (std::size_t j = 0; j < table.cols; ++j) CHECK(table.values[j] == 0.0);
  table.values[0] = 5.0;
  model.reset_pad_row();
  CHECK(table.values[0] == 0.0);
}

TEST_CASE("batch shape is checked") {
  PredictorModel model(small_shape(), 2);
  auto b = random_batch(3, model.shape(), 1);
  b.ids.pop_back();
  CHECK_THROWS_AS(model.predict(b), Error);
}

TEST_CASE("same seed gives the same initialization") {
  CHECK(PredictorModel(small_shape(), 5).parameters() == PredictorModel(small_shape(), 5).parameters());
  CHECK(PredictorModel(small_shape(), 5).parameters() != PredictorModel(small_shape(), 6).parameters());
}

}
