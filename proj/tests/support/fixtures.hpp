#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nextmin/domain.hpp"
#include "nextmin/features.hpp"
#include "nextmin/generator.hpp"
#include "nextmin/random.hpp"

namespace nextmin::testing {

/// Catalog [A, B, C] with small vocabularies.
inline DatasetManifest abc_manifest() {
  return DatasetManifest::make(ActivityCatalog({"A", "B", "C"}),
                               Vocabulary({"blunt", "penetrating", "burn", "missing"}),
                               Vocabulary({"room_air", "supplemental", "missing"}));
}

inline ActivityEvent event(std::size_t label, std::int64_t start_s, std::int64_t end_s) {
  return ActivityEvent{label, start_s, end_s};
}

inline CaseLog make_case(std::string id, std::int64_t duration_s,
                         std::vector<ActivityEvent> events = {},
                         std::vector<DynamicContextRecord> vitals = {}) {
  CaseLog c;
  c.case_id = std::move(id);
  c.duration_s = duration_s;
  c.events = std::move(events);
  c.vitals = std::move(vitals);
  c.static_context.age = 9.0;
  c.static_context.gcs = 14.0;
  c.static_context.ais = 2.0;
  c.static_context.heart_rate = 110.0;
  c.static_context.systolic_bp = 105.0;
  c.static_context.injury_type = "blunt";
  return c;
}

inline DynamicContextRecord vitals_at(std::int64_t t_s, double hr, double sbp) {
  DynamicContextRecord r;
  r.t_s = t_s;
  r.heart_rate = hr;
  r.respiratory_rate = 22.0;
  r.systolic_bp = sbp;
  r.diastolic_bp = 0.62 * sbp;
  r.oxygen_saturation = 97.0;
  r.fio2 = "room_air";
  return r;
}

/// Six activities, two phases, short cases. One deterministic chain
/// (Monitor -> Watch) and one patient trigger (Fluids when sbp < 90).
inline ScenarioConfig tiny_scenario() {
  ScenarioConfig s;
  s.name = "tiny";
  s.duration_min = {8.0, 2.0, 5.0, 12.0};
  s.phases = {{"early", {0.5, 0.3, 0.0}, false}, {"late", {1.5, 0.5, 0.5}, true}};
  auto add = [&](std::string name, std::string phase, double p, TruncatedNormal offset,
                 TruncatedNormal duration, bool until_end = false) {
    s.activities.push_back({std::move(name), std::move(phase), p, offset, duration, until_end,
                            std::nullopt});
  };
  add("Handoff", "early", 1.0, {0.0, 0.2, 0.0}, {1.5, 0.3, 0.5});
  add("Monitor", "early", 0.9, {0.5, 0.3, 0.0}, {0.5, 0.1, 0.2});
  add("Watch", "early", 0.0, {0.0, 0.0, 0.0}, {}, true);
  add("Exam", "early", 0.7, {3.0, 0.8, 1.0}, {1.5, 0.5, 0.5});
  add("Fluids", "early", 0.1, {2.0, 1.0, 0.0}, {2.0, 0.5, 0.5});
  add("Wrap up", "late", 1.0, {0.0, 0.2, 0.0}, {1.0, 0.2, 0.5});
  s.dependencies = {{"Monitor", "Watch", 30.0, 60.0, 1.0}};
  ContextRule hypotension;
  hypotension.activity = "Fluids";
  hypotension.when = {ContextCondition::Source::dynamic_numeric, "systolic_bp",
                      ContextCondition::Op::lt, "", 90.0};
  hypotension.probability = 0.9;
  hypotension.delay_min_s = 30.0;
  hypotension.delay_max_s = 90.0;
  s.context_rules = {hypotension};
  s.patient.injury_types = {{"blunt", 0.8}, {"penetrating", 0.2}};
  s.vitals.fio2_values = {"room_air", "supplemental"};
  return s;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() /
            ("nextmin-" + tag + "-" + std::to_string(rng() % 1000000007ULL));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace nextmin::testing
