#include "nextmin/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "nextmin/error.hpp"

namespace nextmin {

double TruncatedNormal::sample(Rng& rng) const {
  if (sd <= 0.0) return std::clamp(mean, min, max);
  std::normal_distribution<double> dist(mean, sd);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double x = dist(rng);
    if (x >= min && x <= max) return x;
  }
  return std::clamp(mean, min, max);
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::validation, what); }

std::optional<double> static_numeric(const StaticContext& s, std::string_view field) {
  for (const auto& f : kStaticNumericFields) {
    if (f.name == field) return s.*f.member;
  }
  return std::nullopt;
}

std::optional<double> dynamic_numeric(const DynamicContextRecord& r, std::string_view field) {
  for (const auto& f : kDynamicNumericFields) {
    if (f.name == field) return r.*f.member;
  }
  return std::nullopt;
}

bool compare(double x, ContextCondition::Op op, double v) {
  switch (op) {
    case ContextCondition::Op::lt: return x < v;
    case ContextCondition::Op::gt: return x > v;
    case ContextCondition::Op::eq: return x == v;
  }
  return false;
}

bool holds_static(const ContextCondition& c, const StaticContext& s) {
  if (c.source == ContextCondition::Source::static_category) {
    return s.injury_type && *s.injury_type == c.category;
  }
  const auto x = static_numeric(s, c.field);
  return x && compare(*x, c.op, c.value);
}

bool holds_dynamic(const ContextCondition& c, const DynamicContextRecord& r) {
  const auto x = dynamic_numeric(r, c.field);
  return x && compare(*x, c.op, c.value);
}

bool known_field(const ContextCondition& c) {
  auto has = [&](const auto& fields) {
    return std::any_of(fields.begin(), fields.end(), [&](const auto& f) { return f.name == c.field; });
  };
  switch (c.source) {
    case ContextCondition::Source::static_category: return c.field == kStaticCategoryField;
    case ContextCondition::Source::static_numeric: return has(kStaticNumericFields);
    case ContextCondition::Source::dynamic_numeric: return has(kDynamicNumericFields);
  }
  return false;
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

/// Seconds an antecedent needs before the case end so that every
/// deterministic consequent chain it starts still fits.
std::vector<double> deterministic_slack(const ScenarioConfig& s, const ActivityCatalog& catalog) {
  std::vector<double> slack(catalog.size(), -1.0);
  std::function<double(std::size_t)> visit = [&](std::size_t a) -> double {
    if (slack[a] >= 0.0) return slack[a];
    double best = 0.0;
    for (const auto& rule : s.dependencies) {
      if (!rule.deterministic() || *catalog.index_of(rule.antecedent) != a) continue;
      best = std::max(best, rule.delay_max_s + visit(*catalog.index_of(rule.consequent)));
    }
    return slack[a] = best;
  };
  for (std::size_t i = 0; i < catalog.size(); ++i) visit(i);
  return slack;
}

const char* source_name(ContextCondition::Source s) {
  switch (s) {
    case ContextCondition::Source::static_category: return "static_category";
    case ContextCondition::Source::static_numeric: return "static_numeric";
    case ContextCondition::Source::dynamic_numeric: return "dynamic_numeric";
  }
  return "";
}

const char* op_name(ContextCondition::Op op) {
  switch (op) {
    case ContextCondition::Op::eq: return "eq";
    case ContextCondition::Op::lt: return "lt";
    case ContextCondition::Op::gt: return "gt";
  }
  return "";
}

Json tn_to_json(const TruncatedNormal& t) {
  Json j = {{"mean", t.mean}, {"sd", t.sd}, {"min", t.min}};
  if (std::isfinite(t.max)) j["max"] = t.max;
  return j;
}

TruncatedNormal tn_from_json(const Json& j) {
  TruncatedNormal t{j.at("mean").get<double>(), j.at("sd").get<double>(), j.value("min", 0.0)};
  if (j.contains("max")) t.max = j.at("max").get<double>();
  return t;
}

struct Patient {
  double severity = 0.0;
  double heart_rate = 0.0;
  double systolic_bp = 0.0;
  double decline_per_min = 0.0;
};

double round_to(double x, double step) { return std::round(x / step) * step; }

}  // namespace

void ScenarioConfig::validate() const {
  if (activities.empty()) invalid("scenario has no activities");
  if (!(duration_min.min > 0.0)) invalid("case duration lower bound must be positive");
  std::set<std::string> phase_names;
  for (const auto& p : phases) {
    if (!phase_names.insert(p.name).second) invalid("duplicate phase: " + p.name);
  }
  std::set<std::string> names;
  for (const auto& a : activities) {
    if (!names.insert(a.name).second) invalid("duplicate activity: " + a.name);
    if (!phase_names.contains(a.phase)) invalid("activity " + a.name + " has unknown phase " + a.phase);
    if (!is_probability(a.probability)) invalid("activity " + a.name + " has probability outside [0, 1]");
    if (a.stop) {
      if (a.stop->when.source != ContextCondition::Source::dynamic_numeric || !known_field(a.stop->when)) {
        invalid("stop rule for " + a.name + " must test a vitals field");
      }
      if (a.stop->delay_min_s < 0.0 || a.stop->delay_max_s < a.stop->delay_min_s) {
        invalid("stop rule for " + a.name + " has a bad delay window");
      }
    }
  }
  auto require = [&](const std::string& name, const char* role) {
    if (!names.contains(name)) invalid(std::string("unknown ") + role + " activity: " + name);
  };
  for (const auto& d : dependencies) {
    require(d.antecedent, "antecedent");
    require(d.consequent, "consequent");
    if (!is_probability(d.probability)) invalid("dependency probability outside [0, 1]");
    if (d.delay_min_s < 0.0 || d.delay_max_s < d.delay_min_s) {
      invalid("dependency " + d.antecedent + " -> " + d.consequent + " has a bad delay window");
    }
  }
  for (const auto& c : context_rules) {
    require(c.activity, "context");
    if (!known_field(c.when)) invalid("context rule for " + c.activity + " uses unknown field " + c.when.field);
    if (c.when.source == ContextCondition::Source::dynamic_numeric) {
      if (!is_probability(c.probability)) invalid("context trigger probability outside [0, 1]");
      if (c.delay_min_s < 0.0 || c.delay_max_s < c.delay_min_s) invalid("context trigger has a bad delay window");
    } else if (c.multiplier < 0.0) {
      invalid("context multiplier must be non-negative");
    }
  }
  double total = 0.0;
  for (const auto& w : patient.injury_types) {
    if (w.probability < 0.0) invalid("negative injury type weight");
    total += w.probability;
  }
  if (patient.injury_types.empty() || !(total > 0.0)) invalid("injury type weights must be positive");
  if (vitals.fio2_values.empty()) invalid("fio2 vocabulary is empty");
  for (const auto& [activity, value] : vitals.fio2_sources) {
    require(activity, "fio2 source");
    if (std::find(vitals.fio2_values.begin(), vitals.fio2_values.end(), value) == vitals.fio2_values.end()) {
      invalid("fio2 source value " + value + " is not in the vocabulary");
    }
  }
  if (!(vitals.interval_min.min > 0.0)) invalid("vitals interval lower bound must be positive");
  for (const auto& e : vitals.effects) {
    require(e.activity, "vitals effect");
    ContextCondition probe;
    probe.source = ContextCondition::Source::dynamic_numeric;
    probe.field = e.field;
    if (!known_field(probe)) {
      invalid("vitals effect uses unknown field " + e.field);
    }
    if (e.cap < 0.0) invalid("vitals effect cap must be non-negative");
  }

  // Cycle check on the dependency graph.
  std::map<std::string, std::vector<std::string>> edges;
  for (const auto& d : dependencies) edges[d.antecedent].push_back(d.consequent);
  std::map<std::string, int> state;  // 1 = on stack, 2 = done
  std::function<void(const std::string&)> dfs = [&](const std::string& node) {
    state[node] = 1;
    for (const auto& next : edges[node]) {
      if (state[next] == 1) invalid("dependency cycle through " + next);
      if (state[next] == 0) dfs(next);
    }
    state[node] = 2;
  };
  for (const auto& a : activities) {
    if (state[a.name] == 0) dfs(a.name);
  }
}

DatasetManifest ScenarioConfig::manifest() const {
  std::vector<std::string> labels;
  for (const auto& a : activities) labels.push_back(a.name);
  std::vector<std::string> injuries;
  for (const auto& w : patient.injury_types) injuries.push_back(w.name);
  injuries.emplace_back(kMissingToken);
  auto fio2 = vitals.fio2_values;
  fio2.emplace_back(kMissingToken);
  return DatasetManifest::make(ActivityCatalog(std::move(labels)), Vocabulary(std::move(injuries)),
                               Vocabulary(std::move(fio2)));
}

std::vector<std::size_t> ScenarioConfig::deterministic_labels() const {
  std::set<std::size_t> out;
  for (const auto& d : dependencies) {
    if (!d.deterministic()) continue;
    for (std::size_t i = 0; i < activities.size(); ++i) {
      if (activities[i].name == d.consequent) out.insert(i);
    }
  }
  return {out.begin(), out.end()};
}

GeneratedCase generate_case(const ScenarioConfig& s, const DatasetManifest& manifest,
                            std::string case_id, Rng& rng) {
  const auto& catalog = manifest.catalog;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto chance = [&](double p) { return unit(rng) < p; };
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  GeneratedCase out;
  CaseLog& c = out.log;
  c.case_id = std::move(case_id);
  out.trace.case_id = c.case_id;
  c.duration_s = std::max<std::int64_t>(60, std::llround(60.0 * s.duration_min.sample(rng)));
  const std::int64_t last_start = c.duration_s - 1;

  // Patient and arrival context.
  StaticContext& st = c.static_context;
  if (!chance(s.patient.injury_missing_probability)) {
    double total = 0.0;
    for (const auto& w : s.patient.injury_types) total += w.probability;
    double u = uniform(0.0, total);
    st.injury_type = s.patient.injury_types.back().name;
    for (const auto& w : s.patient.injury_types) {
      if (u < w.probability) {
        st.injury_type = w.name;
        break;
      }
      u -= w.probability;
    }
  }
  Patient patient;
  patient.severity = std::pow(unit(rng), 1.2);
  if (st.injury_type == "penetrating") patient.severity = std::min(1.0, patient.severity + 0.1);
  std::normal_distribution<double> noise(0.0, 1.0);
  patient.heart_rate = 95.0 + 45.0 * patient.severity + 12.0 * noise(rng);
  patient.systolic_bp = 118.0 - 45.0 * patient.severity + 10.0 * noise(rng);
  patient.decline_per_min = 3.0 * std::max(0.0, patient.severity - 0.5);
  const double gcs = std::clamp(std::round(15.0 - 12.0 * patient.severity * patient.severity + noise(rng)), 3.0, 15.0);
  const double ais = std::clamp(std::round(1.0 + 4.5 * patient.severity + 0.7 * noise(rng)), 1.0, 6.0);
  const double age = round_to(TruncatedNormal{8.0, 5.0, 0.1, 17.9}.sample(rng), 0.1);
  auto maybe = [&](double v) -> std::optional<double> {
    if (chance(s.patient.numeric_missing_probability)) return std::nullopt;
    return v;
  };
  st.age = maybe(age);
  st.gcs = maybe(gcs);
  st.ais = maybe(ais);
  st.heart_rate = maybe(std::round(patient.heart_rate));
  st.systolic_bp = maybe(std::round(patient.systolic_bp));

  const auto slack = deterministic_slack(s, catalog);
  auto& events = c.events;
  auto& trace = out.trace.entries;

  auto emit = [&](std::size_t label, std::int64_t start, TraceEntry::Source source, std::size_t rule,
                  std::size_t cause) -> bool {
    if (start < 0 || start > last_start) return false;
    if (static_cast<double>(start) + slack[label] > static_cast<double>(last_start)) return false;
    const auto& spec = s.activities[label];
    std::int64_t end = c.duration_s;
    if (!spec.until_end) {
      const auto len = std::max<std::int64_t>(20, std::llround(60.0 * spec.duration_min.sample(rng)));
      end = std::min(c.duration_s, start + len);
    }
    trace.push_back({events.size(), spec.name, start, source, rule, cause, std::nullopt});
    events.push_back({label, start, end});
    return true;
  };

  // Base occurrences, phase by phase.
  std::map<std::string, double> onset;
  for (const auto& p : s.phases) {
    const double m = p.onset_min.sample(rng);
    onset[p.name] = p.anchored_at_end ? static_cast<double>(c.duration_s) / 60.0 - m : m;
  }
  for (std::size_t i = 0; i < s.activities.size(); ++i) {
    const auto& a = s.activities[i];
    double p = a.probability;
    for (const auto& rule : s.context_rules) {
      if (rule.activity == a.name && rule.when.source != ContextCondition::Source::dynamic_numeric &&
          holds_static(rule.when, st)) {
        p *= rule.multiplier;
      }
    }
    if (p <= 0.0 || !chance(std::min(p, 1.0))) continue;
    const double start_min = onset[a.phase] + a.offset_min.sample(rng);
    emit(i, std::llround(60.0 * std::max(0.0, start_min)), TraceEntry::Source::base, 0, 0);
  }

  auto close_dependencies = [&](std::size_t from) {
    std::deque<std::size_t> queue;
    for (std::size_t e = from; e < events.size(); ++e) queue.push_back(e);
    while (!queue.empty()) {
      const std::size_t e = queue.front();
      queue.pop_front();
      const auto antecedent = events[e];
      for (std::size_t r = 0; r < s.dependencies.size(); ++r) {
        const auto& rule = s.dependencies[r];
        if (*catalog.index_of(rule.antecedent) != antecedent.label) continue;
        if (!rule.deterministic() && !chance(rule.probability)) continue;
        const double delay = std::floor(uniform(rule.delay_min_s, rule.delay_max_s + 1.0));
        const auto start = antecedent.start_s + static_cast<std::int64_t>(std::min(delay, rule.delay_max_s));
        if (emit(*catalog.index_of(rule.consequent), start, TraceEntry::Source::dependency, r, e)) {
          queue.push_back(events.size() - 1);
        }
      }
    }
  };
  close_dependencies(0);

  // Vitals are simulated forward in time: each record reflects the patient,
  // the support in place and the activities already started; it can then
  // trigger new activities and stop running ones.
  auto running = [&](const ActivityEvent& ev, std::int64_t t) {
    return ev.start_s <= t && (t < ev.end_s || ev.end_s == c.duration_s);
  };
  auto fio2_at = [&](std::int64_t t) {
    for (const auto& [activity, value] : s.vitals.fio2_sources) {
      const auto label = *catalog.index_of(activity);
      for (const auto& ev : events) {
        if (ev.label == label && running(ev, t)) return value;
      }
    }
    return s.vitals.fio2_values.front();
  };
  auto shift = [&](std::string_view field, std::int64_t t) {
    double total = 0.0;
    for (const auto& e : s.vitals.effects) {
      if (e.field != field) continue;
      const auto label = *catalog.index_of(e.activity);
      std::optional<std::int64_t> first;
      bool active = false;
      for (const auto& ev : events) {
        if (ev.label != label || ev.start_s > t) continue;
        first = std::min(first.value_or(ev.start_s), ev.start_s);
        active = active || running(ev, t);
      }
      if (!first || (e.while_active && !active)) continue;
      const double ramp = e.per_minute * static_cast<double>(t - *first) / 60.0;
      total += e.offset + std::clamp(ramp, -e.cap, e.cap);
    }
    return total;
  };
  auto vital = [&](double v) -> std::optional<double> {
    if (chance(s.vitals.numeric_missing_probability)) return std::nullopt;
    return v;
  };
  std::vector<bool> trigger_fired(s.context_rules.size(), false);
  double t_min = s.vitals.first_record_min.sample(rng);
  while (std::llround(60.0 * t_min) < c.duration_s) {
    DynamicContextRecord r;
    r.t_s = std::llround(60.0 * t_min);
    const double drift = patient.decline_per_min * t_min;
    r.heart_rate = vital(std::round(patient.heart_rate + 0.8 * drift + shift("heart_rate", r.t_s) + 6.0 * noise(rng)));
    r.respiratory_rate = vital(
        std::round(20.0 + 10.0 * patient.severity + shift("respiratory_rate", r.t_s) + 3.0 * noise(rng)));
    const double sbp = std::round(patient.systolic_bp - drift + shift("systolic_bp", r.t_s) + 6.0 * noise(rng));
    r.systolic_bp = vital(sbp);
    r.diastolic_bp = vital(std::round(0.62 * sbp + shift("diastolic_bp", r.t_s) + 4.0 * noise(rng)));
    r.oxygen_saturation = vital(std::clamp(
        std::round(96.0 - 8.0 * patient.severity + shift("oxygen_saturation", r.t_s) + 1.5 * noise(rng)), 70.0, 100.0));
    if (!chance(s.vitals.fio2_missing_probability)) r.fio2 = fio2_at(r.t_s);
    const std::size_t v = c.vitals.size();
    c.vitals.push_back(r);

    // Vitals-triggered activities fire once, after the first crossing.
    const std::size_t before_triggers = events.size();
    for (std::size_t k = 0; k < s.context_rules.size(); ++k) {
      const auto& rule = s.context_rules[k];
      if (rule.when.source != ContextCondition::Source::dynamic_numeric || trigger_fired[k]) continue;
      if (!holds_dynamic(rule.when, r)) continue;
      trigger_fired[k] = true;
      if (chance(rule.probability)) {
        const auto start = r.t_s + std::llround(uniform(rule.delay_min_s, rule.delay_max_s));
        emit(*catalog.index_of(rule.activity), start, TraceEntry::Source::context, k, v);
      }
    }
    close_dependencies(before_triggers);

    for (std::size_t e = 0; e < events.size(); ++e) {
      auto& ev = events[e];
      const auto& stop = s.activities[ev.label].stop;
      if (!stop || trace[e].stopped_by || ev.start_s >= r.t_s || !running(ev, r.t_s)) continue;
      if (!holds_dynamic(stop->when, r)) continue;
      const auto end = r.t_s + std::llround(uniform(stop->delay_min_s, stop->delay_max_s));
      if (end < ev.end_s) {
        ev.end_s = end;
        trace[e].stopped_by = v;
      }
    }
    t_min += s.vitals.interval_min.sample(rng);
  }

  // Events and trace entries in start order.
  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (events[a].start_s != events[b].start_s) return events[a].start_s < events[b].start_s;
    return events[a].label < events[b].label;
  });
  std::vector<std::size_t> position(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = i;
  std::vector<ActivityEvent> sorted_events;
  std::vector<TraceEntry> sorted_trace;
  for (std::size_t i : order) {
    sorted_events.push_back(events[i]);
    auto entry = trace[i];
    entry.event_index = position[i];
    if (entry.source == TraceEntry::Source::dependency) entry.cause = position[entry.cause];
    sorted_trace.push_back(std::move(entry));
  }
  events = std::move(sorted_events);
  trace = std::move(sorted_trace);

  out.log = validate_case(std::move(out.log), manifest);
  return out;
}

GeneratedCorpus generate_dataset(const ScenarioConfig& scenario, std::size_t n_cases,
                                 std::uint64_t seed) {
  if (n_cases < 3) throw Error(ErrorCode::invalid_argument, "need at least 3 cases");
  scenario.validate();
  GeneratedCorpus out;
  out.corpus.manifest = scenario.manifest();
  out.corpus.cases.reserve(n_cases);
  out.traces.reserve(n_cases);
  for (std::size_t i = 0; i < n_cases; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "case-%04zu", i + 1);
    Rng rng(derive_seed(seed, "case", i));
    auto generated = generate_case(scenario, out.corpus.manifest, id, rng);
    out.corpus.cases.push_back(std::move(generated.log));
    out.traces.push_back(std::move(generated.trace));
  }
  return out;
}

Json trace_to_json(const GroundTruthTrace& t) {
  Json entries = Json::array();
  for (const auto& e : t.entries) {
    Json j = {{"event_index", e.event_index}, {"activity", e.activity}, {"start_s", e.start_s}};
    switch (e.source) {
      case TraceEntry::Source::base:
        j["source"] = "base";
        break;
      case TraceEntry::Source::dependency:
        j["source"] = "dependency";
        j["rule"] = e.rule;
        j["antecedent_event"] = e.cause;
        break;
      case TraceEntry::Source::context:
        j["source"] = "context";
        j["rule"] = e.rule;
        j["vitals_record"] = e.cause;
        break;
    }
    if (e.stopped_by) j["stopped_by_vitals_record"] = *e.stopped_by;
    entries.push_back(std::move(j));
  }
  return {{"case_id", t.case_id}, {"entries", std::move(entries)}};
}

void save_generated(const std::filesystem::path& dir, const ScenarioConfig& scenario,
                    const GeneratedCorpus& generated) {
  save_corpus(dir, generated.corpus);
  for (const auto& t : generated.traces) {
    write_json_file(dir / "traces" / (t.case_id + ".json"), trace_to_json(t));
  }
  write_json_file(dir / "scenario.json", scenario_to_json(scenario), 2);
}

namespace {

Json condition_to_json(const ContextCondition& c) {
  Json when = {{"source", source_name(c.source)}, {"field", c.field}, {"op", op_name(c.op)}};
  if (c.source == ContextCondition::Source::static_category) {
    when["category"] = c.category;
  } else {
    when["value"] = c.value;
  }
  return when;
}

ContextCondition condition_from_json(const Json& when) {
  static const std::map<std::string, ContextCondition::Source> sources{
      {"static_category", ContextCondition::Source::static_category},
      {"static_numeric", ContextCondition::Source::static_numeric},
      {"dynamic_numeric", ContextCondition::Source::dynamic_numeric}};
  static const std::map<std::string, ContextCondition::Op> ops{
      {"eq", ContextCondition::Op::eq}, {"lt", ContextCondition::Op::lt}, {"gt", ContextCondition::Op::gt}};
  const auto src = sources.find(when.at("source").get<std::string>());
  const auto op = ops.find(when.value("op", std::string("eq")));
  if (src == sources.end() || op == ops.end()) invalid("bad condition: " + when.dump());
  ContextCondition c;
  c.source = src->second;
  c.op = op->second;
  c.field = when.at("field").get<std::string>();
  c.category = when.value("category", std::string());
  c.value = when.value("value", 0.0);
  return c;
}

}  // namespace

Json scenario_to_json(const ScenarioConfig& s) {
  Json phases = Json::array();
  for (const auto& p : s.phases) {
    phases.push_back({{"name", p.name}, {"onset_min", tn_to_json(p.onset_min)}, {"anchored_at_end", p.anchored_at_end}});
  }
  Json activities = Json::array();
  for (const auto& a : s.activities) {
    Json j = {{"name", a.name}, {"phase", a.phase}, {"probability", a.probability},
              {"offset_min", tn_to_json(a.offset_min)}, {"until_end", a.until_end}};
    if (!a.until_end) j["duration_min"] = tn_to_json(a.duration_min);
    if (a.stop) {
      j["stop"] = {{"when", condition_to_json(a.stop->when)}, {"delay_s", {a.stop->delay_min_s, a.stop->delay_max_s}}};
    }
    activities.push_back(std::move(j));
  }
  Json deps = Json::array();
  for (const auto& d : s.dependencies) {
    deps.push_back({{"antecedent", d.antecedent}, {"consequent", d.consequent},
                    {"delay_s", {d.delay_min_s, d.delay_max_s}}, {"probability", d.probability}});
  }
  Json ctx = Json::array();
  for (const auto& c : s.context_rules) {
    Json j = {{"activity", c.activity}, {"when", condition_to_json(c.when)}};
    if (c.when.source == ContextCondition::Source::dynamic_numeric) {
      j["probability"] = c.probability;
      j["delay_s"] = {c.delay_min_s, c.delay_max_s};
    } else {
      j["multiplier"] = c.multiplier;
    }
    ctx.push_back(std::move(j));
  }
  Json injuries = Json::array();
  for (const auto& w : s.patient.injury_types) injuries.push_back({{"name", w.name}, {"probability", w.probability}});
  Json effects = Json::array();
  for (const auto& e : s.vitals.effects) {
    effects.push_back({{"activity", e.activity}, {"field", e.field}, {"offset", e.offset},
                       {"per_minute", e.per_minute}, {"cap", e.cap}, {"while_active", e.while_active}});
  }
  Json fio2_sources = Json::array();
  for (const auto& [activity, value] : s.vitals.fio2_sources) {
    fio2_sources.push_back({{"activity", activity}, {"fio2", value}});
  }
  return {
      {"version", ScenarioConfig::kVersion},
      {"name", s.name},
      {"duration_min", tn_to_json(s.duration_min)},
      {"phases", std::move(phases)},
      {"activities", std::move(activities)},
      {"dependencies", std::move(deps)},
      {"context_rules", std::move(ctx)},
      {"patient",
       {{"injury_types", std::move(injuries)},
        {"injury_missing_probability", s.patient.injury_missing_probability},
        {"numeric_missing_probability", s.patient.numeric_missing_probability}}},
      {"vitals",
       {{"first_record_min", tn_to_json(s.vitals.first_record_min)},
        {"interval_min", tn_to_json(s.vitals.interval_min)},
        {"numeric_missing_probability", s.vitals.numeric_missing_probability},
        {"fio2_missing_probability", s.vitals.fio2_missing_probability},
        {"fio2_values", s.vitals.fio2_values},
        {"fio2_sources", std::move(fio2_sources)},
        {"effects", std::move(effects)}}},
  };
}

ScenarioConfig scenario_from_json(const Json& j) {
  ScenarioConfig s;
  try {
    if (j.at("version").get<int>() != ScenarioConfig::kVersion) {
      throw Error(ErrorCode::version_mismatch, "unsupported scenario version");
    }
    s.name = j.value("name", std::string("scenario"));
    s.duration_min = tn_from_json(j.at("duration_min"));
    for (const auto& p : j.at("phases")) {
      s.phases.push_back({p.at("name").get<std::string>(), tn_from_json(p.at("onset_min")),
                          p.value("anchored_at_end", false)});
    }
    for (const auto& a : j.at("activities")) {
      ActivitySpec spec;
      spec.name = a.at("name").get<std::string>();
      spec.phase = a.at("phase").get<std::string>();
      spec.probability = a.value("probability", 0.0);
      spec.offset_min = tn_from_json(a.at("offset_min"));
      spec.until_end = a.value("until_end", false);
      if (!spec.until_end) spec.duration_min = tn_from_json(a.at("duration_min"));
      if (a.contains("stop")) {
        const auto delay = a.at("stop").at("delay_s").get<std::array<double, 2>>();
        spec.stop = StopRule{condition_from_json(a.at("stop").at("when")), delay[0], delay[1]};
      }
      s.activities.push_back(std::move(spec));
    }
    for (const auto& d : j.at("dependencies")) {
      const auto delay = d.at("delay_s").get<std::array<double, 2>>();
      s.dependencies.push_back({d.at("antecedent").get<std::string>(), d.at("consequent").get<std::string>(),
                                delay[0], delay[1], d.value("probability", 1.0)});
    }
    for (const auto& c : j.at("context_rules")) {
      ContextRule rule;
      rule.activity = c.at("activity").get<std::string>();
      rule.when = condition_from_json(c.at("when"));
      rule.multiplier = c.value("multiplier", 1.0);
      rule.probability = c.value("probability", 0.0);
      if (c.contains("delay_s")) {
        const auto delay = c.at("delay_s").get<std::array<double, 2>>();
        rule.delay_min_s = delay[0];
        rule.delay_max_s = delay[1];
      }
      s.context_rules.push_back(std::move(rule));
    }
    const auto& p = j.at("patient");
    for (const auto& w : p.at("injury_types")) {
      s.patient.injury_types.push_back({w.at("name").get<std::string>(), w.at("probability").get<double>()});
    }
    s.patient.injury_missing_probability = p.value("injury_missing_probability", 0.0);
    s.patient.numeric_missing_probability = p.value("numeric_missing_probability", 0.0);
    const auto& v = j.at("vitals");
    s.vitals.first_record_min = tn_from_json(v.at("first_record_min"));
    s.vitals.interval_min = tn_from_json(v.at("interval_min"));
    s.vitals.numeric_missing_probability = v.value("numeric_missing_probability", 0.0);
    s.vitals.fio2_missing_probability = v.value("fio2_missing_probability", 0.0);
    s.vitals.fio2_values = v.at("fio2_values").get<std::vector<std::string>>();
    for (const auto& f : v.at("fio2_sources")) {
      s.vitals.fio2_sources.emplace_back(f.at("activity").get<std::string>(), f.at("fio2").get<std::string>());
    }
    for (const auto& e : v.value("effects", Json::array())) {
      s.vitals.effects.push_back({e.at("activity").get<std::string>(), e.at("field").get<std::string>(),
                                  e.value("offset", 0.0), e.value("per_minute", 0.0), e.value("cap", 0.0),
                                  e.value("while_active", true)});
    }
  } catch (const nlohmann::json::exception& e) {
    invalid(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

ScenarioConfig default_scenario() {
  ScenarioConfig s;
  s.name = "default";
  s.phases = {
      {"arrival", {0.0, 0.2, 0.0}},
      {"primary", {1.0, 0.6, 0.0}},
      {"airway", {2.0, 1.5, 0.0}},
      {"circulation", {3.0, 2.0, 0.0}},
      {"secondary", {9.0, 3.0, 2.0}},
      {"imaging", {13.0, 4.0, 4.0}},
      {"disposition", {6.0, 3.0, 1.0}, true},
  };
  auto brief = [](double mean, double sd) { return TruncatedNormal{mean, sd, 0.3}; };
  auto at = [](double mean, double sd) { return TruncatedNormal{mean, sd, 0.0}; };
  auto add = [&](std::string name, std::string phase, double p, TruncatedNormal offset,
                 std::optional<TruncatedNormal> duration) {
    s.activities.push_back({std::move(name), std::move(phase), p, offset,
                            duration.value_or(TruncatedNormal{}), !duration.has_value(), std::nullopt});
  };
  const std::optional<TruncatedNormal> until_end;

  add("Patient handoff", "arrival", 1.0, at(0.0, 0.2), brief(2.0, 0.8));
  add("Visual assessment", "arrival", 0.95, at(0.2, 0.3), brief(1.5, 0.6));
  add("Distal pulse check", "arrival", 0.8, at(0.5, 0.5), brief(1.0, 0.5));
  add("Manual blood pressure", "arrival", 0.85, at(0.8, 0.6), brief(1.5, 0.6));
  add("Cardiac monitor leads", "arrival", 0.9, at(0.5, 0.5), brief(1.0, 0.4));
  add("Pulse oximetry probe", "arrival", 0.9, at(0.4, 0.4), brief(0.8, 0.3));
  add("Continuous cardiac monitoring", "arrival", 0.0, at(0.0, 0.0), until_end);

  add("Airway assessment", "primary", 0.9, at(0.0, 0.4), brief(1.0, 0.4));
  add("Breathing assessment", "primary", 0.9, at(0.3, 0.4), brief(1.5, 0.5));
  add("Chest auscultation", "primary", 0.7, at(0.8, 0.5), brief(1.0, 0.4));
  add("Circulation assessment", "primary", 0.85, at(0.8, 0.5), brief(1.0, 0.4));
  add("GCS assessment", "primary", 0.8, at(1.5, 0.8), brief(1.0, 0.4));
  add("Pupil exam", "primary", 0.75, at(1.8, 0.8), brief(0.7, 0.3));
  add("Exposure", "primary", 0.7, at(2.5, 1.0), brief(1.5, 0.6));
  add("Warm blanket", "primary", 0.0, at(0.0, 0.0), until_end);

  add("Supplemental oxygen", "airway", 0.45, at(0.0, 0.8), until_end);
  add("Jaw thrust", "airway", 0.15, at(0.5, 0.5), brief(2.0, 1.0));
  add("Suction", "airway", 0.2, at(1.0, 0.8), brief(1.0, 0.5));
  add("Bag-mask ventilation", "airway", 0.08, at(0.5, 1.0), brief(2.5, 1.0));
  add("Intubation", "airway", 0.02, at(2.0, 1.5), brief(3.0, 1.0));
  add("Ventilator management", "airway", 0.0, at(0.0, 0.0), until_end);
  add("End-tidal CO2 check", "airway", 0.0, at(0.0, 0.0), brief(1.5, 0.5));
  add("Chest rise check", "airway", 0.0, at(0.0, 0.0), brief(1.0, 0.4));
  add("Orogastric tube", "airway", 0.0, at(0.0, 0.0), brief(2.0, 0.8));
  add("Cervical collar", "airway", 0.3, at(1.0, 1.0), until_end);
  add("Spine immobilization check", "airway", 0.0, at(0.0, 0.0), brief(1.5, 0.5));

  add("IV placement", "circulation", 0.7, at(0.5, 1.5), brief(2.5, 1.2));
  add("Second IV placement", "circulation", 0.25, at(3.0, 2.0), brief(2.5, 1.2));
  add("Blood draw", "circulation", 0.0, at(0.0, 0.0), brief(1.5, 0.5));
  add("IV fluids", "circulation", 0.0, at(0.0, 0.0), until_end);
  add("IO placement", "circulation", 0.05, at(2.0, 1.0), brief(2.0, 0.8));
  add("Blood transfusion", "circulation", 0.0, at(0.0, 0.0), until_end);
  add("Blood warmer", "circulation", 0.0, at(0.0, 0.0), until_end);
  add("Massive transfusion protocol", "circulation", 0.0, at(0.0, 0.0), until_end);
  add("Arterial line", "circulation", 0.0, at(0.0, 0.0), brief(4.0, 1.5));
  add("Pressure dressing", "circulation", 0.1, at(1.5, 1.0), until_end);
  add("Tourniquet", "circulation", 0.04, at(1.0, 0.8), until_end);
  add("Pelvic binder", "circulation", 0.06, at(3.0, 1.5), until_end);
  add("Temperature check", "circulation", 0.6, at(4.0, 3.0), brief(0.7, 0.3));
  add("Tachycardia reassessment", "circulation", 0.0, at(0.0, 0.0), brief(1.5, 0.5));
  add("Glucose check", "circulation", 0.35, at(3.0, 2.0), brief(1.0, 0.4));

  add("Log roll", "secondary", 0.7, at(0.0, 1.0), brief(2.0, 0.6));
  add("Back exam", "secondary", 0.0, at(0.0, 0.0), brief(1.5, 0.5));
  add("Head exam", "secondary", 0.8, at(0.5, 1.0), brief(1.0, 0.4));
  add("Chest exam", "secondary", 0.8, at(1.0, 1.0), brief(1.0, 0.4));
  add("Abdomen exam", "secondary", 0.8, at(1.5, 1.0), brief(1.2, 0.4));
  add("Pelvis exam", "secondary", 0.7, at(2.0, 1.0), brief(0.8, 0.3));
  add("Extremity exam", "secondary", 0.75, at(2.5, 1.2), brief(1.5, 0.6));
  add("Neuro exam", "secondary", 0.6, at(3.0, 1.5), brief(1.5, 0.6));
  add("Wound care", "secondary", 0.12, at(3.0, 2.0), brief(4.0, 2.0));
  add("Burn dressing", "secondary", 0.02, at(2.0, 2.0), until_end);
  add("Splinting", "secondary", 0.0, at(0.0, 0.0), brief(4.0, 1.5));

  add("FAST exam", "imaging", 0.5, at(0.0, 1.0), brief(3.0, 1.0));
  add("Chest X-ray", "imaging", 0.7, at(1.0, 1.5), brief(2.0, 0.8));
  add("Pelvis X-ray", "imaging", 0.0, at(0.0, 0.0), brief(1.5, 0.5));
  add("Imaging review", "imaging", 0.0, at(0.0, 0.0), brief(2.0, 0.6));
  add("CT preparation", "imaging", 0.3, at(4.0, 2.0), until_end);

  add("Pain medication", "disposition", 0.5, at(0.0, 2.0), brief(1.0, 0.4));
  add("Family update", "disposition", 0.4, at(1.0, 2.0), brief(3.0, 1.0));
  add("Disposition decision", "disposition", 0.9, at(2.0, 1.5), brief(1.0, 0.4));
  add("Transfer preparation", "disposition", 0.0, at(0.0, 0.0), until_end);

  s.dependencies = {
      {"Cardiac monitor leads", "Continuous cardiac monitoring", 0, 60, 1.0},
      {"Exposure", "Warm blanket", 30, 180, 0.6},
      {"Bag-mask ventilation", "Intubation", 60, 180, 0.8},
      {"Intubation", "Ventilator management", 60, 180, 1.0},
      {"Intubation", "End-tidal CO2 check", 30, 90, 1.0},
      {"Intubation", "Chest rise check", 0, 45, 1.0},
      {"Intubation", "Orogastric tube", 180, 420, 0.6},
      {"Cervical collar", "Spine immobilization check", 30, 120, 1.0},
      {"IV placement", "Blood draw", 30, 120, 1.0},
      {"IV placement", "IV fluids", 60, 240, 0.65},
      {"Blood transfusion", "Blood warmer", 0, 60, 1.0},
      {"Blood transfusion", "Massive transfusion protocol", 180, 420, 0.3},
      {"Blood transfusion", "Arterial line", 300, 600, 0.4},
      {"Log roll", "Back exam", 0, 60, 1.0},
      {"Extremity exam", "Splinting", 60, 180, 0.35},
      {"Chest X-ray", "Pelvis X-ray", 60, 180, 0.6},
      {"Chest X-ray", "Imaging review", 120, 240, 1.0},
      {"Disposition decision", "Transfer preparation", 60, 120, 1.0},
  };

  using Src = ContextCondition::Source;
  using Op = ContextCondition::Op;
  auto injury = [](std::string activity, std::string category, double multiplier) {
    return ContextRule{std::move(activity), {Src::static_category, std::string(kStaticCategoryField), Op::eq, std::move(category), 0.0},
                       multiplier};
  };
  auto numeric = [](std::string activity, std::string field, Op op, double value, double multiplier) {
    return ContextRule{std::move(activity), {Src::static_numeric, std::move(field), op, {}, value}, multiplier};
  };
  auto trigger = [](std::string activity, std::string field, Op op, double value, double p, double lo, double hi) {
    return ContextRule{std::move(activity), {Src::dynamic_numeric, std::move(field), op, {}, value}, 1.0, p, lo, hi};
  };
  s.context_rules = {
      injury("Cervical collar", "blunt", 2.0),
      injury("Cervical collar", "penetrating", 0.3),
      injury("Pressure dressing", "penetrating", 4.0),
      injury("Tourniquet", "penetrating", 5.0),
      injury("Pelvic binder", "blunt", 2.0),
      injury("IV placement", "penetrating", 1.3),
      injury("FAST exam", "penetrating", 1.6),
      injury("Wound care", "penetrating", 3.0),
      injury("Wound care", "burn", 4.0),
      injury("Burn dressing", "burn", 30.0),
      numeric("Supplemental oxygen", "gcs", Op::lt, 13.0, 1.7),
      numeric("Bag-mask ventilation", "gcs", Op::lt, 9.0, 6.0),
      numeric("Intubation", "gcs", Op::lt, 9.0, 5.0),
      numeric("CT preparation", "ais", Op::gt, 3.5, 2.0),
      numeric("Second IV placement", "ais", Op::gt, 3.5, 2.0),
      trigger("Blood transfusion", "systolic_bp", Op::lt, 90.0, 0.85, 60, 240),
      trigger("Tachycardia reassessment", "heart_rate", Op::gt, 150.0, 0.8, 30, 120),
  };

  s.patient.injury_types = {{"blunt", 0.72}, {"penetrating", 0.12}, {"burn", 0.08}, {"other", 0.08}};
  s.vitals.fio2_values = {"room_air", "supplemental", "ventilator"};
  s.vitals.fio2_sources = {{"Ventilator management", "ventilator"},
                           {"Bag-mask ventilation", "supplemental"},
                           {"Supplemental oxygen", "supplemental"}};
  s.vitals.effects = {
      {"Supplemental oxygen", "oxygen_saturation", 3.0, 0.0, 0.0, true},
      {"Ventilator management", "oxygen_saturation", 4.0, 0.0, 0.0, true},
      {"Blood transfusion", "systolic_bp", 0.0, 3.0, 35.0, false},
      {"Blood transfusion", "heart_rate", 0.0, -2.0, 25.0, false},
  };
  auto stop_when = [&](const std::string& activity, std::string field, Op op, double value, double lo, double hi) {
    for (auto& a : s.activities) {
      if (a.name == activity) a.stop = StopRule{{Src::dynamic_numeric, std::move(field), op, {}, value}, lo, hi};
    }
  };
  stop_when("Supplemental oxygen", "oxygen_saturation", Op::gt, 96.5, 30, 120);
  stop_when("Blood transfusion", "systolic_bp", Op::gt, 100.0, 30, 120);
  return s;
}

}  // namespace nextmin
