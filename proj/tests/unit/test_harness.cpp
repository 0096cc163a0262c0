#include <doctest.h>

#include <set>

#include "nextmin/error.hpp"
#include "world.hpp"

using namespace nextmin;
using namespace nextmin::testing;

namespace {

Sample sample_at(std::int64_t minute, LabelVector label) {
  Sample s;
  s.minute = minute;
  s.label = std::move(label);
  return s;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("split datasets follow the cache split") {
  const auto& w = small_world();
  const auto d = make_split_datasets(w.cache, ContextMask::all());
  std::size_t expected = 0;
  for (const auto& s : w.cache.samples) {
    expected += std::find(w.cache.split.test.begin(), w.cache.split.test.end(), s.case_id) !=
                w.cache.split.test.end();
  }
  CHECK(d.test.size() == expected);
  CHECK(d.train.size() + d.validation.size() + d.test.size() == w.cache.samples.size());
  for (const auto& id : d.test.case_ids) {
    CHECK(std::find(w.cache.split.test.begin(), w.cache.split.test.end(), id) != w.cache.split.test.end());
  }
}

TEST_CASE("experiment report is consistent with its predictions") {
  const auto& w = small_world();
  const auto& r = w.experiment;
  CHECK(r.thresholds.size() == w.cache.manifest.catalog.size());
  CHECK(r.test_report.samples == r.test_truths.rows());
  const auto again = evaluate_predictions(r.test_predictions, r.test_truths, w.cache.manifest.catalog);
  CHECK(again == r.test_report);
  const auto d = make_split_datasets(w.cache, w.config.mask);
  CHECK(decide(r.trained.model.predict(d.test.all()), r.thresholds) == r.test_predictions);
}

TEST_CASE("frequency baseline") {
  std::vector<Sample> s;
  for (int i = 0; i < 10; ++i) s.push_back(sample_at(0, {static_cast<std::uint8_t>(i < 9), 0, static_cast<std::uint8_t>(i < 5)}));
  for (int i = 0; i < 4; ++i) s.push_back(sample_at(1, {0, 0, static_cast<std::uint8_t>(i == 0)}));
  const auto b = FrequencyBaseline::fit(s);
  CHECK(b.max_minute() == 1);
  CHECK(b.predict_minute(0) == LabelVector{1, 0, 1});
  CHECK(b.predict_minute(1) == LabelVector{0, 0, 0});
  CHECK(b.predict_minute(30) == b.predict_minute(1));
  const std::vector<std::int64_t> minutes{0, 5};
  const auto m = b.predict(minutes);
  CHECK(m(0, 0) == 1);
  CHECK(m(1, 0) == 0);
  CHECK_THROWS_AS(b.predict_minute(-1), Error);
}

TEST_CASE("ablation arms") {
  const auto& arms = ablation_arms();
  std::set<std::string> masks;
  for (const auto& a : arms) masks.insert(a.mask.to_string());
  CHECK(masks.size() == 12);
  CHECK(arms.front().mask == ContextMask::parse("last_k"));
  CHECK(arms.back().mask == ContextMask::all());
  CHECK(arms.back().reference_weighted_f1 == 0.671);
  CHECK(arms.back().reference_samples_f1 == 0.556);
}

TEST_CASE("ablation runs every arm and serializes") {
  const auto& w = small_world();
  AblationConfig cfg;
  cfg.train = w.config;
  cfg.train.max_epochs = 2;
  cfg.jobs = 2;
  cfg.focus_labels = tiny_scenario().deterministic_labels();
  std::size_t callbacks = 0;
  const auto rows = run_ablation(w.cache, cfg, [&](const AblationRow&) { ++callbacks; });
  REQUIRE(rows.size() == 12);
  CHECK(callbacks == 12);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK_FALSE(rows[i].failed);
    CHECK(rows[i].name == ablation_arms()[i].name);
    CHECK(rows[i].cache_hash == cache_hash(w.cache));
    CHECK(rows[i].focus_weighted_f1.has_value());
  }
  const auto back = ablation_from_json(Json::parse(ablation_to_json(rows).dump()));
  REQUIRE(back.size() == 12);
  CHECK(back[3].weighted_f1 == rows[3].weighted_f1);
  CHECK(back[3].mask == rows[3].mask);
  CHECK(render_ablation(rows).find("All contexts") != std::string::npos);

  // Same seed, same arm, same result regardless of thread scheduling.
  cfg.jobs = 1;
  const auto serial = run_ablation(w.cache, cfg);
  for (std::size_t i = 0; i < 12; ++i) CHECK(serial[i].weighted_f1 == rows[i].weighted_f1);
}

TEST_CASE("a failing arm is reported, not thrown") {
  const auto& w = small_world();
  AblationConfig cfg;
  cfg.train = w.config;
  cfg.train.batch_size = 1;
  const auto rows = run_ablation(w.cache, cfg);
  REQUIRE(rows.size() == 12);
  for (const auto& r : rows) {
    CHECK(r.failed);
    CHECK_FALSE(r.error.empty());
  }
}

TEST_CASE("timeline export") {
  const auto& w = small_world();
  const auto& id = w.cache.split.test.front();
  const auto* c = w.corpus().find(id);
  REQUIRE(c != nullptr);

  const auto none = export_timeline(w.corpus(), id, w.bundle, w.experiment.test_report, 1.1);
  CHECK(none.labels.empty());
  CHECK(none.minutes.size() == static_cast<std::size_t>(c->minutes()));

  const auto all = export_timeline(w.corpus(), id, w.bundle, w.experiment.test_report, -1.0);
  CHECK(all.labels.size() == w.cache.manifest.catalog.size());
  const auto offline = offline_predictions(w, id);
  for (const auto& m : all.minutes) {
    CHECK(m.predicted == offline[static_cast<std::size_t>(m.minute)]);
    const auto truth = label_minute(c->events, m.minute, w.cache.manifest.catalog.size());
    for (std::size_t j = 0; j < all.labels.size(); ++j) {
      const auto label = all.labels[j];
      const bool p = std::find(m.predicted.begin(), m.predicted.end(), label) != m.predicted.end();
      const bool t = truth[label] != 0;
      CHECK(m.cells[j] == (p ? (t ? Outcome::tp : Outcome::fp) : (t ? Outcome::fn : Outcome::tn)));
    }
  }
  CHECK(timeline_to_json(all).at("minutes").size() == all.minutes.size());
  CHECK_FALSE(render_timeline(all).empty());

  CHECK_THROWS_AS(export_timeline(w.corpus(), "nope", w.bundle, w.experiment.test_report), Error);
  auto uncalibrated = w.bundle;
  uncalibrated.thresholds.reset();
  CHECK_THROWS_AS(export_timeline(w.corpus(), id, uncalibrated, w.experiment.test_report), Error);
}

}
