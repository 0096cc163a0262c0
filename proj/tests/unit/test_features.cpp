#include <doctest.h>

#include <algorithm>
#include <set>

#include "fixtures.hpp"
#include "nextmin/error.hpp"
#include "nextmin/generator.hpp"
#include "nextmin/model.hpp"
#include "nextmin/sample_cache.hpp"

using namespace nextmin;
using namespace nextmin::testing;

namespace {

std::vector<CaseLog> n_cases(std::size_t n) {
  std::vector<CaseLog> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_case("c" + std::to_string(i), 60));
  return out;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("split sizes and determinism") {
  const auto cases = n_cases(201);
  const auto s = split_cases(cases, {161, 20, 20}, 7);
  CHECK(s.train.size() == 161);
  CHECK(s.validation.size() == 20);
  CHECK(s.test.size() == 20);
  std::set<std::string> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 201);

  const auto ten = n_cases(10);
  CHECK(split_cases(ten, {8, 1, 1}, 3) == split_cases(ten, {8, 1, 1}, 3));
  CHECK_THROWS_AS(split_cases(n_cases(2), {1, 1, 1}, 0), Error);
}

TEST_CASE("normalizer extrema and degenerate fields") {
  std::vector<CaseLog> cases;
  for (double hr : {60.0, 100.0, 140.0}) {
    auto c = make_case("c" + std::to_string(cases.size()), 600, {}, {vitals_at(0, hr, 100)});
    c.static_context.age.reset();
    cases.push_back(c);
  }
  cases[1].duration_s = 40 * 60;
  const auto stats = fit_normalizer(cases);
  CHECK(stats.dynamic_numeric[0].min == 60.0);
  CHECK(stats.dynamic_numeric[0].max == 140.0);
  CHECK(stats.static_numeric[0].degenerate);
  CHECK(stats.static_numeric[0].min == 0.0);
  CHECK(stats.static_numeric[0].max == 0.0);
  CHECK(stats.timestamp.max == 40.0);
}

TEST_CASE("scale_numeric") {
  CHECK(scale_numeric(5, {0, 10}) == 0.5);
  CHECK(scale_numeric(12, {0, 10}) == 1.0);
  CHECK(scale_numeric(-3, {0, 10}) == 0.0);
  CHECK(scale_numeric(7, {7, 7}) == 0.0);
}

TEST_CASE("one-hot encoding") {
  const Vocabulary v({"blunt", "penetrating", "burn", "missing"});
  CHECK(encode_one_hot(std::string("penetrating"), v) == std::vector<double>{0, 1, 0, 0});
  CHECK(encode_one_hot(std::nullopt, v) == std::vector<double>{0, 0, 0, 1});
  CHECK_THROWS_AS(encode_one_hot(std::string("stab"), v), Error);
}

TEST_CASE("carry-forward picks the latest record at or before the cutoff") {
  const std::vector<DynamicContextRecord> v{vitals_at(30, 1, 1), vitals_at(250, 2, 2)};
  CHECK(carry_forward_vitals(v, 120)->t_s == 30);
  CHECK(carry_forward_vitals(v, 20) == nullptr);
  CHECK(carry_forward_vitals(v, 250)->t_s == 250);
}

TEST_CASE("last-k selection") {
  Rng rng(1);
  const std::vector<ActivityEvent> few{event(0, 10, 20), event(1, 20, 30), event(2, 70, 80)};
  CHECK(select_last_k(few, 120, 5, rng) == std::vector<std::uint32_t>{3, 2, 1, 0, 0});
  CHECK(select_last_k(few, 0, 5, rng) == std::vector<std::uint32_t>(5, kPadId));

  std::vector<ActivityEvent> crowded;
  for (int i = 0; i < 7; ++i) crowded.push_back(event(static_cast<std::size_t>(i % 3), 60 + 8 * i, 119));
  Rng r1(42), r2(42);
  const auto a = select_last_k(crowded, 120, 5, r1);
  const auto b = select_last_k(crowded, 120, 5, r2);
  CHECK(a == b);
  CHECK(std::count(a.begin(), a.end(), kPadId) == 0);

  // Over many seeds every in-window event gets picked at least once.
  std::set<std::uint32_t> seen;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    Rng r(seed);
    for (auto id : select_last_k(crowded, 120, 5, r)) seen.insert(id);
  }
  CHECK(seen == std::set<std::uint32_t>{1, 2, 3});
  CHECK_THROWS_AS(select_last_k(few, 120, 0, rng), Error);
}

TEST_CASE("long-range vector") {
  const std::vector<ActivityEvent> ev{event(0, 5, 30), event(2, 65, 300), event(0, 90, 100)};
  CHECK(long_range_vector(ev, 120, 3) == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(long_range_vector(ev, 0, 3) == std::vector<std::uint8_t>{0, 0, 0});
}

TEST_CASE("sample_case: counts, labels and minute-0 state") {
  const auto m = abc_manifest();
  const auto c = make_case("c", 5 * 60 - 10, {event(0, 90, 200)}, {vitals_at(30, 100, 100)});
  const std::vector<CaseLog> train{c};
  const FeatureEncoder enc(m, fit_normalizer(train), 5, 9);
  const auto samples = enc.sample_case(c);
  REQUIRE(samples.size() == 5);
  for (std::size_t t = 0; t < samples.size(); ++t) {
    CHECK(samples[t].label[0] == (t >= 1 && t <= 3 ? 1 : 0));
  }
  CHECK(samples[0].last_k_ids == std::vector<std::uint32_t>(5, kPadId));
  CHECK(samples[0].long_range_vec == std::vector<std::uint8_t>(3, 0));
  CHECK(samples[0].timestamp_scalar == 0.0);
}

TEST_CASE("mask widths") {
  const auto m = abc_manifest();
  const std::size_t H = 5 + 4, M = 5 + 3, n = 3;
  const auto full = input_layout(ContextMask::all(), H, M, n, 5);
  CHECK(full.head_width == H + M);
  CHECK(full.tail_width == n + 1);
  ModelShape shape{full, n, 16, {8}};
  CHECK(shape.input_width() == H + M + 16 + n + 1);

  const auto ts = input_layout(ContextMask::parse("timestamp"), H, M, n, 5);
  CHECK(ts.dense_width() == 1);
  CHECK_FALSE(ts.pooled_embedding());
  CHECK_THROWS_AS(input_layout(ContextMask::none(), H, M, n, 5), Error);

  CHECK(ContextMask::parse("static,dynamic") == ContextMask::parse("dynamic+static"));
  CHECK(ContextMask::parse(ContextMask::all().to_string()) == ContextMask::all());
  CHECK_THROWS_AS(ContextMask::parse("vitals"), Error);
}

TEST_CASE("pipeline invariants on a generated corpus") {
  const auto gen = generate_dataset(default_scenario(), 12, 5);
  const auto cache = preprocess(gen.corpus, 5, 5, ContextMask::all(), {8, 2, 2});

  std::int64_t minutes = 0;
  for (const auto& c : gen.corpus.cases) minutes += c.minutes();
  CHECK(cache.samples.size() == static_cast<std::size_t>(minutes));

  const auto enc = cache.encoder();
  const auto layout = enc.layout(ContextMask::all());
  std::size_t checked = 0;
  for (const auto& s : cache.samples) {
    CHECK(s.last_k_ids.size() == 5);
    const auto fb = assemble_features(s, ContextMask::all());
    CHECK(fb.dense.size() == layout.dense_width());
    for (double x : fb.dense) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
    ++checked;
  }
  CHECK(checked > 0);

  for (const auto& c : gen.corpus.cases) {
    const auto samples = enc.sample_case(c);
    for (std::size_t t = 1; t < samples.size(); ++t) {
      for (std::size_t i = 0; i < samples[t].long_range_vec.size(); ++i) {
        CHECK(samples[t].long_range_vec[i] >= samples[t - 1].long_range_vec[i]);
      }
    }
  }

  const auto again = preprocess(gen.corpus, 5, 5, ContextMask::all(), {8, 2, 2});
  CHECK(sample_cache_to_json(again).dump() == sample_cache_to_json(cache).dump());
  CHECK(cache_hash(again) == cache_hash(cache));
  const auto other = preprocess(gen.corpus, 5, 6, ContextMask::all(), {8, 2, 2});
  CHECK(cache_hash(other) != cache_hash(cache));
}

TEST_CASE("sample cache file round-trip") {
  const auto gen = generate_dataset(tiny_scenario(), 6, 2);
  const auto cache = preprocess(gen.corpus, 3, 2, ContextMask::parse("last_k+timestamp"), {4, 1, 1});
  TempDir dir("cache");
  save_sample_cache(dir.path() / "cache.json", cache);
  const auto loaded = load_sample_cache(dir.path() / "cache.json");
  CHECK(loaded.samples == cache.samples);
  CHECK(loaded.split == cache.split);
  CHECK(loaded.stats == cache.stats);
  CHECK(loaded.mask == cache.mask);
  CHECK(cache_hash(loaded) == cache_hash(cache));
}

TEST_CASE("build_dataset packs rows in sample order") {
  const auto gen = generate_dataset(tiny_scenario(), 4, 3);
  const auto cache = preprocess(gen.corpus, 3, 3, ContextMask::all(), {2, 1, 1});
  const auto layout = cache.encoder().layout(ContextMask::all());
  const auto ds = build_dataset(cache.samples, ContextMask::all(), layout);
  REQUIRE(ds.size() == cache.samples.size());
  CHECK(ds.ids.size() == ds.size() * 3);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto fb = assemble_features(cache.samples[r], ContextMask::all());
    CHECK(std::equal(fb.dense.begin(), fb.dense.end(), ds.dense.row(r).begin()));
    CHECK(ds.minutes[r] == cache.samples[r].minute);
  }
}

}
