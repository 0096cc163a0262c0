#include <doctest.h>

#include <algorithm>
#include <limits>

#include "fixtures.hpp"
#include "nextmin/error.hpp"
#include "nextmin/harness.hpp"
#include "overfit.hpp"

using namespace nextmin;
using namespace nextmin::testing;

namespace {

SplitDatasets small_split(std::uint64_t seed) {
  static const auto gen = generate_dataset(tiny_scenario(), 12, 4);
  const auto cache = preprocess(gen.corpus, 5, seed, ContextMask::all(), {8, 2, 2});
  return make_split_datasets(cache, ContextMask::all());
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-3;
  cfg.hidden = {16, 8};
  cfg.max_epochs = 15;
  return cfg;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("zero epochs return the initialized model") {
  const auto d = small_split(1);
  auto cfg = quick_config();
  cfg.max_epochs = 0;
  const auto r = train(d.train, d.validation, cfg);
  CHECK(r.history.epochs() == 0);
  CHECK_FALSE(r.history.best_epoch.has_value());
  CHECK(r.model.parameters() == PredictorModel(r.model.shape(), cfg.seed).parameters());
}

TEST_CASE("training is deterministic") {
  const auto d = small_split(1);
  const auto a = train(d.train, d.validation, quick_config());
  const auto b = train(d.train, d.validation, quick_config());
  CHECK(a.history == b.history);
  CHECK(a.model.parameters() == b.model.parameters());
}

TEST_CASE("the returned model is the best-validation snapshot") {
  const auto d = small_split(2);
  auto cfg = quick_config();
  cfg.max_epochs = 25;
  const auto r = train(d.train, d.validation, cfg);
  REQUIRE(r.history.best_epoch.has_value());
  const auto& vl = r.history.validation_loss;
  const auto best = std::min_element(vl.begin(), vl.end());
  CHECK(static_cast<std::size_t>(best - vl.begin()) == *r.history.best_epoch);
  CHECK(r.model.mode() == Mode::eval);
  const double reloss = focal_loss_value(r.model.predict(d.validation.all()), d.validation.labels, r.loss);
  CHECK(reloss == doctest::Approx(*best).epsilon(1e-12));
  CHECK(r.history.train_loss.back() < r.history.train_loss.front());
}

TEST_CASE("early stopping honours patience") {
  const auto d = small_split(3);
  auto cfg = quick_config();
  cfg.max_epochs = 300;
  cfg.patience = 2;
  cfg.min_delta = 1.0;  // nothing counts as an improvement after the first epoch
  const auto r = train(d.train, d.validation, cfg);
  CHECK(r.history.epochs() == 3);
}

TEST_CASE("invalid configurations are rejected") {
  auto cfg = quick_config();
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = quick_config();
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = quick_config();
  cfg.mask = ContextMask::none();
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("loss on a fixed batch falls over the first ten steps") {
  const auto gen = generate_dataset(tiny_scenario(), 5, 2023);
  const FeatureEncoder enc(gen.corpus.manifest, fit_normalizer(gen.corpus.cases), 5, 2023);
  std::vector<Sample> samples;
  for (const auto& c : gen.corpus.cases) {
    auto s = enc.sample_case(c);
    samples.insert(samples.end(), s.begin(), s.end());
  }
  const auto mask = ContextMask::all();
  const auto ds = build_dataset(samples, mask, enc.layout(mask));
  ModelShape shape{enc.layout(mask), ds.labels.cols(), 16, {256, 128}};
  PredictorModel model(shape, 2023);
  const FocalLossConfig loss{compute_label_weights(ds.labels), 2.0};
  AdamOptimizer opt({1e-4}, model.parameters());
  const auto batch = ds.all();
  double previous = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 10; ++step) {
    ForwardCache cache;
    const auto l = focal_loss(model.forward(batch, &cache), ds.labels, loss);
    CHECK(l.loss < previous);
    previous = l.loss;
    opt.step(model.parameters(), model.backward(cache, l.grad_logits));
    model.reset_pad_row();
  }
}

TEST_CASE("overfits five tiny cases") {
  const auto r = overfit_tiny(11);
  CHECK(r.samples_f1 >= 0.95);
  CHECK(r.epochs <= 500);
  MESSAGE("samples F1 " << r.samples_f1 << " after " << r.epochs << " epochs, " << r.seconds << " s");
}

}
