#include <doctest.h>

#include <thread>

#include "nextmin/error.hpp"
#include "nextmin/service/session.hpp"
#include "world.hpp"

using namespace nextmin;
using namespace nextmin::service;
using namespace nextmin::testing;

namespace {

struct Service {
  SessionManager manager;
  std::string model_id;

  Service() : manager(small_world().corpus()) {
    const auto& w = small_world();
    model_id = manager.add_model(w.bundle, w.corpus().manifest, w.experiment.test_report);
  }

  std::shared_ptr<Session> replay(const std::string& case_id) {
    return manager.create_session({SessionMode::replay, model_id, case_id, {}});
  }
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

}  // namespace

TEST_SUITE("session") {

TEST_CASE("replay reproduces offline predictions for every test case") {
  Service svc;
  const auto& w = small_world();
  for (const auto& id : w.cache.split.test) {
    const auto offline = offline_predictions(w, id);
    auto s = svc.replay(id);
    CHECK(s->minute() == 0);
    for (std::size_t t = 0; t < offline.size(); ++t) {
      const auto f = s->tick();
      REQUIRE(f.minute == static_cast<std::int64_t>(t));
      CHECK(f.predicted == offline[t]);
    }
    CHECK(code_of([&] { s->tick(); }) == ErrorCode::end_of_case);
  }
}

TEST_CASE("frame features equal the cached sample features") {
  Service svc;
  const auto& w = small_world();
  const auto& id = w.cache.split.test.front();
  const std::vector<std::string> ids{id};
  const auto samples = w.cache.select(ids);
  auto s = svc.replay(id);
  for (const auto& sample : samples) {
    const auto f = s->tick();
    const auto expected = assemble_features(sample, w.bundle.mask);
    CHECK(f.features.dense == expected.dense);
    CHECK(f.features.ids == expected.ids);
    CHECK(f.truth.has_value());
  }
}

TEST_CASE("minute 0 has no process context") {
  Service svc;
  const auto f = svc.replay(small_world().cache.split.test.front())->tick();
  const auto& layout = small_world().cache.encoder().layout(small_world().bundle.mask);
  CHECK(f.features.ids == std::vector<std::uint32_t>(layout.k, kPadId));
  const auto n = small_world().cache.manifest.catalog.size();
  for (std::size_t i = 0; i < n; ++i) CHECK(f.features.dense[layout.head_width + i] == 0.0);
}

TEST_CASE("vitals override shows up from its minute on") {
  Service svc;
  const auto& w = small_world();
  auto s = svc.replay(w.cache.split.test.front());
  const auto& manifest = w.corpus().manifest;
  s->apply_override(override_from_json(
      Json{{"kind", "vitals"}, {"effective_minute", 3}, {"fields", {{"systolic_bp", 70.0}}}}, manifest, 0));
  const auto enc = w.cache.encoder();
  const auto sbp_col = enc.static_width() + 2;  // dynamic block follows static
  const double scaled70 = scale_numeric(70.0, w.cache.stats.dynamic_numeric[2]);
  std::vector<PredictionFrame> frames;
  for (int t = 0; t < 5; ++t) frames.push_back(s->tick());
  CHECK(frames[4].features.dense[sbp_col] == scaled70);
  CHECK(frames[3].features.dense[sbp_col] == scaled70);
}

TEST_CASE("inject and suppress events") {
  Service svc;
  const auto& w = small_world();
  const auto& manifest = w.corpus().manifest;
  const auto& id = w.cache.split.test.front();
  const auto* c = w.corpus().find(id);
  const auto n = manifest.catalog.size();
  const auto layout = w.cache.encoder().layout(w.bundle.mask);

  auto s = svc.replay(id);
  const auto fluids = *manifest.catalog.index_of("Fluids");
  s->apply_override(override_from_json(
      Json{{"kind", "inject_event"}, {"activity", "Fluids"}, {"start_s", 130}, {"end_s", 170}}, manifest, 0));
  PredictionFrame f;
  for (int t = 0; t < 4; ++t) f = s->tick();
  CHECK(f.minute == 3);
  CHECK(f.features.dense[layout.head_width + fluids] == 1.0);
  CHECK(std::find(f.features.ids.begin(), f.features.ids.end(), ActivityCatalog::embedding_id(fluids)) !=
        f.features.ids.end());

  // Suppressing the first event removes it from context but not from truth.
  auto plain = svc.replay(id);
  auto hidden = svc.replay(id);
  const auto first = c->events.front();
  hidden->apply_override(override_from_json(Json{{"kind", "suppress_event"}, {"event_index", 0}}, manifest, 0));
  const auto minute_after = first.start_s / 60 + 1;
  PredictionFrame fp, fh;
  for (std::int64_t t = 0; t <= minute_after; ++t) {
    fp = plain->tick();
    fh = hidden->tick();
  }
  CHECK(fh.truth == fp.truth);
  const bool other_same_label = std::count_if(c->events.begin(), c->events.end(), [&](const ActivityEvent& e) {
    return e.label == first.label && e.start_s < 60 * minute_after;
  }) > 1;
  if (!other_same_label) {
    CHECK(fp.features.dense[layout.head_width + first.label] == 1.0);
    CHECK(fh.features.dense[layout.head_width + first.label] == 0.0);
  }
  (void)n;
}

TEST_CASE("removing overrides restores plain replay") {
  Service svc;
  const auto& w = small_world();
  const auto& id = w.cache.split.test.back();
  const auto& manifest = w.corpus().manifest;
  auto s = svc.replay(id);
  const auto o = s->apply_override(override_from_json(
      Json{{"kind", "static"}, {"fields", {{"gcs", 3.0}}}, {"category", "penetrating"}}, manifest, 0));
  CHECK(s->overrides().size() == 1);
  s->remove_override(o.id);
  CHECK(s->overrides().empty());
  CHECK(code_of([&] { s->remove_override(o.id); }) == ErrorCode::not_found);
  const auto offline = offline_predictions(w, id);
  for (const auto& expected : offline) CHECK(s->tick().predicted == expected);
}

TEST_CASE("override validation") {
  const auto& m = small_world().corpus().manifest;
  CHECK_THROWS_AS(override_from_json(Json{{"kind", "vitals"}, {"fields", {{"pulse", 1.0}}}}, m, 0), Error);
  CHECK_THROWS_AS(override_from_json(Json{{"kind", "vitals"}}, m, 0), Error);
  CHECK_THROWS_AS(override_from_json(Json{{"kind", "wat"}}, m, 0), Error);
  CHECK_THROWS_AS(override_from_json(Json{{"kind", "inject_event"}, {"activity", "Nope"}, {"start_s", 0}, {"end_s", 1}}, m, 0), Error);
  CHECK_THROWS_AS(override_from_json(Json{{"kind", "static"}, {"category", "stab"}}, m, 0), Error);
  const auto o = override_from_json(Json{{"kind", "vitals"}, {"fields", {{"heart_rate", 150.0}}}}, m, 7);
  CHECK(o.effective_minute == 7);
  const auto j = override_to_json(o, m.catalog);
  CHECK(j.at("kind") == "vitals");
}

TEST_CASE("live sessions") {
  Service svc;
  StaticContext st;
  st.age = 6.0;
  st.injury_type = "blunt";
  auto s = svc.manager.create_session({SessionMode::live, svc.model_id, "", st});
  const auto f0 = s->tick();
  CHECK_FALSE(f0.truth.has_value());

  s->record_event("Monitor", 70, 100);
  auto r = vitals_at(90, 120.0, 80.0);
  s->record_vitals(r);
  s->tick();
  const auto f2 = s->tick();
  const auto monitor = *small_world().corpus().manifest.catalog.index_of("Monitor");
  CHECK(f2.features.ids.front() == ActivityCatalog::embedding_id(monitor));

  CHECK(code_of([&] { s->record_event("Nope", 0, 1); }) == ErrorCode::validation);
  CHECK(code_of([&] { s->record_event("Monitor", 10, 5); }) == ErrorCode::validation);
  auto replay = svc.replay(small_world().cache.split.test.front());
  CHECK(code_of([&] { replay->record_event("Monitor", 0, 1); }) == ErrorCode::state);
  CHECK(code_of([&] { replay->record_vitals(r); }) == ErrorCode::state);
}

TEST_CASE("manager errors") {
  Service svc;
  CHECK(code_of([&] { svc.manager.create_session({SessionMode::replay, "m99", "case-0000", {}}); }) ==
        ErrorCode::not_found);
  CHECK(code_of([&] { svc.replay("missing"); }) == ErrorCode::not_found);
  CHECK(code_of([&] { svc.manager.session("s42"); }) == ErrorCode::not_found);

  auto bundle = small_world().bundle;
  bundle.thresholds.reset();
  CHECK(code_of([&] { svc.manager.add_model(bundle, small_world().corpus().manifest); }) == ErrorCode::state);
  auto other = small_world().bundle;
  other.catalog_hash ^= 1;
  CHECK(code_of([&] { svc.manager.add_model(other, small_world().corpus().manifest); }) ==
        ErrorCode::catalog_mismatch);
}

TEST_CASE("subscriptions see every frame in order") {
  Service svc;
  auto s = svc.replay(small_world().cache.split.test.front());
  s->tick();
  auto a = s->subscribe();
  auto b = s->subscribe();
  std::vector<std::int64_t> seen_b;
  std::thread reader([&] {
    while (auto f = b.next(std::chrono::milliseconds(2000))) seen_b.push_back(f->minute);
  });
  s->tick();
  s->tick();
  std::vector<std::int64_t> seen_a;
  for (int i = 0; i < 3; ++i) seen_a.push_back(a.next(std::chrono::milliseconds(1000))->minute);
  CHECK(seen_a == std::vector<std::int64_t>{0, 1, 2});
  svc.manager.close_session(s->id());
  reader.join();
  CHECK(seen_b == seen_a);
  CHECK(b.closed());
  CHECK_FALSE(a.next(std::chrono::milliseconds(10)).has_value());
  CHECK(code_of([&] { s->tick(); }) == ErrorCode::state);
}

TEST_CASE("timeline through the manager") {
  Service svc;
  const auto& id = small_world().cache.split.test.front();
  const auto t = svc.manager.timeline(id, svc.model_id, 1.1);
  CHECK(t.labels.empty());
  SessionManager bare(small_world().corpus());
  const auto m = bare.add_model(small_world().bundle, small_world().corpus().manifest);
  const auto all = bare.timeline(id, m, -1.0);
  CHECK(all.labels.size() == small_world().corpus().manifest.catalog.size());
}

}
