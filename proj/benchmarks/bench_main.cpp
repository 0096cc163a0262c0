#include <benchmark/benchmark.h>

#include <random>

#include "nextmin/adam.hpp"
#include "nextmin/focal_loss.hpp"
#include "nextmin/generator.hpp"
#include "nextmin/metrics.hpp"
#include "nextmin/model.hpp"
#include "nextmin/random.hpp"
#include "nextmin/sample_cache.hpp"
#include "nextmin/training.hpp"

using namespace nextmin;

namespace {

// Default architecture over the default scenario's feature layout.
struct Fixture {
  GeneratedCorpus gen = generate_dataset(default_scenario(), 12, 7);
  SampleCache cache = preprocess(gen.corpus, 5, 7, ContextMask::all(), {8, 2, 2});
  InputLayout layout = cache.encoder().layout(ContextMask::all());
  Dataset data = build_dataset(cache.samples, ContextMask::all(), layout);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

Batch rows(const Dataset& d, std::size_t n) {
  std::vector<std::size_t> idx(std::min(n, d.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return d.batch(idx);
}

PredictorModel default_model(const Fixture& f) {
  ModelShape shape;
  shape.input = f.layout;
  shape.n_labels = f.cache.manifest.catalog.size();
  shape.embed_dim = 16;
  shape.hidden = {256, 128};
  return PredictorModel(shape, 1);
}

void BM_Predict(benchmark::State& state) {
  const auto& f = fixture();
  auto model = default_model(f);
  model.set_mode(Mode::eval);
  const auto batch = rows(f.data, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Predict)->Arg(1)->Arg(64);

void BM_TrainStep(benchmark::State& state) {
  const auto& f = fixture();
  auto model = default_model(f);
  model.set_mode(Mode::train);
  std::vector<std::size_t> idx(64);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto batch = f.data.batch(idx);
  const auto targets = f.data.label_rows(idx);
  const FocalLossConfig loss{compute_label_weights(f.data.labels), 2.0};
  AdamOptimizer opt({1e-4}, model.parameters());
  for (auto _ : state) {
    ForwardCache cache;
    const auto probs = model.forward(batch, &cache);
    const auto l = focal_loss(probs, targets, loss);
    opt.step(model.parameters(), model.backward(cache, l.grad_logits));
    model.reset_pad_row();
  }
}
BENCHMARK(BM_TrainStep);

void BM_SampleCase(benchmark::State& state) {
  const auto& f = fixture();
  const auto enc = f.cache.encoder();
  const auto& c = f.gen.corpus.cases.front();
  for (auto _ : state) benchmark::DoNotOptimize(enc.sample_case(c));
  state.SetItemsProcessed(state.iterations() * c.minutes());
}
BENCHMARK(BM_SampleCase);

void BM_OptimalThreshold(benchmark::State& state) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> s(n);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = u(rng);
    y[i] = u(rng) < 0.3;
  }
  for (auto _ : state) benchmark::DoNotOptimize(optimal_threshold(s, y));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_OptimalThreshold)->Arg(600)->Arg(6000);

}  // namespace
BENCHMARK_MAIN();
