#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nextmin/domain_io.hpp"
#include "nextmin/random.hpp"

namespace nextmin {

/// Normal distribution restricted to [min, max] by rejection (clamped after
/// a bounded number of attempts).
struct TruncatedNormal {
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = std::numeric_limits<double>::infinity();

  double sample(Rng& rng) const;
};

struct PhaseTemplate {
  std::string name;
  /// Minutes after arrival, or minutes before the case ends when anchored at the end.
  TruncatedNormal onset_min;
  bool anchored_at_end = false;
};

struct ContextCondition {
  enum class Source { static_category, static_numeric, dynamic_numeric };
  enum class Op { eq, lt, gt };

  Source source = Source::static_category;
  std::string field;
  Op op = Op::eq;
  std::string category;  // static_category
  double value = 0.0;    // numeric sources
};

/// Ends a running activity after the first vitals record (taken after its
/// start) that satisfies `when`.
struct StopRule {
  ContextCondition when;
  double delay_min_s = 0.0;
  double delay_max_s = 0.0;
};

struct ActivitySpec {
  std::string name;
  std::string phase;
  /// Chance of a base-rate occurrence in the phase; 0 for rule-only activities.
  double probability = 0.0;
  TruncatedNormal offset_min;
  TruncatedNormal duration_min;
  bool until_end = false;
  std::optional<StopRule> stop;
};

/// Consequent starts [delay_min_s, delay_max_s] after each antecedent start
/// with the given probability. Probability 1 makes the rule deterministic.
struct DependencyRule {
  std::string antecedent;
  std::string consequent;
  double delay_min_s = 0.0;
  double delay_max_s = 0.0;
  double probability = 1.0;

  bool deterministic() const noexcept { return probability >= 1.0; }
};

/// Static conditions scale an activity's base probability. Dynamic
/// conditions trigger the activity after the first vitals record that
/// satisfies them.
struct ContextRule {
  std::string activity;
  ContextCondition when;
  double multiplier = 1.0;   // static conditions
  double probability = 0.0;  // dynamic triggers
  double delay_min_s = 0.0;
  double delay_max_s = 0.0;
};

struct CategoryWeight {
  std::string name;
  double probability = 0.0;
};

struct PatientModel {
  std::vector<CategoryWeight> injury_types;
  double injury_missing_probability = 0.03;
  double numeric_missing_probability = 0.05;
};

/// Shifts a vitals field once an activity has started: `offset` plus
/// `per_minute` times the minutes since its first start, capped at `cap`
/// in magnitude. With `while_active` the shift applies only while it runs.
struct VitalsEffect {
  std::string activity;
  std::string field;
  double offset = 0.0;
  double per_minute = 0.0;
  double cap = 0.0;
  bool while_active = true;
};

struct VitalsModel {
  TruncatedNormal first_record_min{1.5, 1.0, 0.0};
  TruncatedNormal interval_min{3.0, 1.8, 0.5};
  double numeric_missing_probability = 0.08;
  double fio2_missing_probability = 0.12;
  /// Activities that set fio2 while running, checked in order; the first
  /// active one wins, otherwise the first fio2 value applies.
  std::vector<std::pair<std::string, std::string>> fio2_sources;
  std::vector<std::string> fio2_values;
  std::vector<VitalsEffect> effects;
};

struct ScenarioConfig {
  static constexpr int kVersion = 1;

  std::string name = "default";
  TruncatedNormal duration_min{28.0, 14.0, 5.0};
  std::vector<PhaseTemplate> phases;
  std::vector<ActivitySpec> activities;
  std::vector<DependencyRule> dependencies;
  std::vector<ContextRule> context_rules;
  PatientModel patient;
  VitalsModel vitals;

  /// Throws Error(validation) on bad probabilities, unknown names or a
  /// dependency cycle.
  void validate() const;
  DatasetManifest manifest() const;
  /// Label indices that are consequents of deterministic rules.
  std::vector<std::size_t> deterministic_labels() const;
};

/// The shipped scenario: 61 activities in five phases with process rules
/// (deterministic chains) and patient rules (injury type, GCS, AIS,
/// hypotension, tachycardia).
ScenarioConfig default_scenario();

Json scenario_to_json(const ScenarioConfig& s);
ScenarioConfig scenario_from_json(const Json& j);

struct TraceEntry {
  enum class Source { base, dependency, context };

  std::size_t event_index = 0;
  std::string activity;
  std::int64_t start_s = 0;
  Source source = Source::base;
  /// Dependency or context rule index; unused for base occurrences.
  std::size_t rule = 0;
  /// Antecedent event index (dependency) or vitals record index (context).
  std::size_t cause = 0;
  /// Vitals record that triggered the activity's stop rule, if any.
  std::optional<std::size_t> stopped_by;
};

struct GroundTruthTrace {
  std::string case_id;
  std::vector<TraceEntry> entries;  // one per event, in event order
};

Json trace_to_json(const GroundTruthTrace& t);

struct GeneratedCase {
  CaseLog log;
  GroundTruthTrace trace;
};

GeneratedCase generate_case(const ScenarioConfig& scenario, const DatasetManifest& manifest,
                            std::string case_id, Rng& rng);

struct GeneratedCorpus {
  Corpus corpus;
  std::vector<GroundTruthTrace> traces;
};

/// n_cases >= 3 cases with per-case derived seeds.
GeneratedCorpus generate_dataset(const ScenarioConfig& scenario, std::size_t n_cases,
                                 std::uint64_t seed);

/// Writes manifest.json, cases/, traces/ and scenario.json.
void save_generated(const std::filesystem::path& dir, const ScenarioConfig& scenario,
                    const GeneratedCorpus& generated);

}  // namespace nextmin
