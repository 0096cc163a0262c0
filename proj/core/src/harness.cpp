#include "nextmin/harness.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include "nextmin/error.hpp"

namespace nextmin {

SplitDatasets make_split_datasets(const SampleCache& cache, const ContextMask& mask) {
  const auto layout = cache.encoder().layout(mask);
  auto build = [&](const std::vector<std::string>& ids) {
    const auto samples = cache.select(ids);
    return build_dataset(samples, mask, layout);
  };
  return {build(cache.split.train), build(cache.split.validation), build(cache.split.test)};
}

ExperimentResult run_experiment(const SampleCache& cache, const TrainConfig& cfg,
                                const EpochCallback& on_epoch) {
  const auto data = make_split_datasets(cache, cfg.mask);
  const auto started = std::chrono::steady_clock::now();
  ExperimentResult r{train(data.train, data.validation, cfg, on_epoch), {}, {}, {}, {}, 0.0};
  r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  r.thresholds = calibrate_thresholds(r.trained.model, data.validation);
  r.test_predictions = decide(r.trained.model.predict(data.test.all()), r.thresholds);
  r.test_truths = data.test.labels;
  r.test_report = evaluate_predictions(r.test_predictions, r.test_truths, cache.manifest.catalog);
  return r;
}

ModelBundle make_bundle(const SampleCache& cache, const TrainConfig& cfg, const ExperimentResult& r) {
  ModelBundle b;
  b.model = r.trained.model;
  b.optimizer = {cfg.learning_rate};
  b.gamma = cfg.gamma;
  b.mask = cfg.mask;
  b.stats = cache.stats;
  b.catalog_hash = cache.manifest.catalog.hash();
  b.k = cache.k;
  b.sample_seed = cache.seed;
  b.thresholds = r.thresholds;
  return b;
}

const std::array<AblationArm, 12>& ablation_arms() {
  static const std::array<AblationArm, 12> arms = [] {
    auto m = [](const char* text) { return ContextMask::parse(text); };
    return std::array<AblationArm, 12>{{
        {"Last k activities", m("last_k"), 0.625, 0.491},
        {"All occurred activities", m("all_occurred"), 0.577, 0.385},
        {"Last k + all occurred", m("last_k+all_occurred"), 0.654, 0.444},
        {"Dynamic patient context", m("dynamic"), 0.427, 0.211},
        {"Static patient context", m("static"), 0.250, 0.110},
        {"Dynamic + static", m("dynamic+static"), 0.448, 0.212},
        {"Timestamp", m("timestamp"), 0.362, 0.189},
        {"Last k + all occurred + dynamic", m("last_k+all_occurred+dynamic"), 0.664, 0.450},
        {"Last k + all occurred + static", m("last_k+all_occurred+static"), 0.662, 0.523},
        {"Last k + all occurred + dynamic + static", m("last_k+all_occurred+dynamic+static"), 0.665, 0.551},
        {"Last k + all occurred + timestamp", m("last_k+all_occurred+timestamp"), 0.655, 0.454},
        {"All contexts", m("all"), 0.671, 0.556},
    }};
  }();
  return arms;
}

std::vector<AblationRow> run_ablation(const SampleCache& cache, const AblationConfig& cfg,
                                      const ArmCallback& on_arm) {
  const auto& arms = ablation_arms();
  const std::uint64_t hash = cache_hash(cache);
  std::vector<AblationRow> rows(arms.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;

  auto run_arm = [&](std::size_t i) {
    const auto& arm = arms[i];
    AblationRow& row = rows[i];
    row.name = arm.name;
    row.mask = arm.mask.to_string();
    row.seed = cfg.train.seed;
    row.cache_hash = hash;
    row.reference_weighted_f1 = arm.reference_weighted_f1;
    row.reference_samples_f1 = arm.reference_samples_f1;
    try {
      TrainConfig tc = cfg.train;
      tc.mask = arm.mask;
      const auto r = run_experiment(cache, tc);
      row.weighted_f1 = r.test_report.weighted_f1;
      row.samples_f1 = r.test_report.samples_f1;
      row.epochs = r.trained.history.epochs();
      row.train_seconds = r.train_seconds;
      if (!cfg.focus_labels.empty()) {
        row.focus_weighted_f1 = weighted_f1(r.test_report.per_label, std::span<const std::size_t>(cfg.focus_labels));
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    if (on_arm) {
      std::lock_guard lock(report_mutex);
      on_arm(row);
    }
  };

  const std::size_t jobs = std::clamp<std::size_t>(cfg.jobs, 1, arms.size());
  if (jobs == 1) {
    for (std::size_t i = 0; i < arms.size(); ++i) run_arm(i);
    return rows;
  }
  std::vector<std::jthread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < arms.size(); i = next++) run_arm(i);
    });
  }
  workers.clear();
  return rows;
}

Json ablation_to_json(const std::vector<AblationRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json j = {{"name", r.name},
              {"mask", r.mask},
              {"failed", r.failed},
              {"weighted_f1", r.weighted_f1},
              {"samples_f1", r.samples_f1},
              {"seed", r.seed},
              {"cache_hash", r.cache_hash},
              {"epochs", r.epochs},
              {"train_seconds", r.train_seconds},
              {"reference_weighted_f1", r.reference_weighted_f1},
              {"reference_samples_f1", r.reference_samples_f1}};
    if (r.failed) j["error"] = r.error;
    if (r.focus_weighted_f1) j["focus_weighted_f1"] = *r.focus_weighted_f1;
    out.push_back(std::move(j));
  }
  return {{"kind", "nextmin.ablation"}, {"rows", std::move(out)}};
}

std::vector<AblationRow> ablation_from_json(const Json& j) {
  std::vector<AblationRow> rows;
  for (const auto& r : j.at("rows")) {
    AblationRow row;
    row.name = r.at("name").get<std::string>();
    row.mask = r.at("mask").get<std::string>();
    row.failed = r.at("failed").get<bool>();
    row.error = r.value("error", std::string());
    row.weighted_f1 = r.at("weighted_f1").get<double>();
    row.samples_f1 = r.at("samples_f1").get<double>();
    if (r.contains("focus_weighted_f1")) row.focus_weighted_f1 = r.at("focus_weighted_f1").get<double>();
    row.seed = r.at("seed").get<std::uint64_t>();
    row.cache_hash = r.at("cache_hash").get<std::uint64_t>();
    row.epochs = r.at("epochs").get<std::size_t>();
    row.train_seconds = r.at("train_seconds").get<double>();
    row.reference_weighted_f1 = r.value("reference_weighted_f1", 0.0);
    row.reference_samples_f1 = r.value("reference_samples_f1", 0.0);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-42s %8s %8s %8s %7s %8s   %s\n", "contexts", "wF1", "sF1", "focus",
                "epochs", "seconds", "reference wF1/sF1");
  out << line;
  for (const auto& r : rows) {
    if (r.failed) {
      std::snprintf(line, sizeof line, "%-42s FAILED: %s\n", r.name.c_str(), r.error.c_str());
    } else {
      char focus[16] = "-";
      if (r.focus_weighted_f1) std::snprintf(focus, sizeof focus, "%.3f", *r.focus_weighted_f1);
      std::snprintf(line, sizeof line, "%-42s %8.3f %8.3f %8s %7zu %8.1f   %.3f/%.3f\n", r.name.c_str(),
                    r.weighted_f1, r.samples_f1, focus, r.epochs, r.train_seconds, r.reference_weighted_f1,
                    r.reference_samples_f1);
    }
    out << line;
  }
  out << "reference: scores reported for the same arms on a private clinical corpus (not reproducible here)\n";
  return out.str();
}

FrequencyBaseline FrequencyBaseline::fit(std::span<const Sample> train_samples) {
  if (train_samples.empty()) throw Error(ErrorCode::invalid_argument, "baseline needs training samples");
  std::int64_t t_max = 0;
  for (const auto& s : train_samples) t_max = std::max(t_max, s.minute);
  const std::size_t n = train_samples.front().label.size();
  std::vector<std::vector<std::size_t>> counts(static_cast<std::size_t>(t_max) + 1, std::vector<std::size_t>(n, 0));
  std::vector<std::size_t> totals(counts.size(), 0);
  for (const auto& s : train_samples) {
    const auto t = static_cast<std::size_t>(s.minute);
    ++totals[t];
    for (std::size_t i = 0; i < n; ++i) counts[t][i] += s.label[i];
  }
  FrequencyBaseline b;
  b.table_.assign(counts.size(), LabelVector(n, 0));
  for (std::size_t t = 0; t < counts.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      b.table_[t][i] = totals[t] > 0 && 2 * counts[t][i] >= totals[t] ? 1 : 0;
    }
  }
  return b;
}

const LabelVector& FrequencyBaseline::predict_minute(std::int64_t minute) const {
  if (minute < 0) throw Error(ErrorCode::invalid_argument, "negative minute");
  return table_[static_cast<std::size_t>(std::min(minute, max_minute()))];
}

LabelMatrix FrequencyBaseline::predict(std::span<const std::int64_t> minutes) const {
  LabelMatrix out(minutes.size(), table_.front().size());
  for (std::size_t r = 0; r < minutes.size(); ++r) {
    const auto& row = predict_minute(minutes[r]);
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

std::string_view to_string(Outcome o) noexcept {
  switch (o) {
    case Outcome::tn: return "TN";
    case Outcome::tp: return "TP";
    case Outcome::fp: return "FP";
    case Outcome::fn: return "FN";
  }
  return "";
}

TimelineExport export_timeline(const Corpus& corpus, std::string_view case_id, const ModelBundle& bundle,
                               const EvalReport& report, double cutoff) {
  const CaseLog* c = corpus.find(case_id);
  if (!c) throw Error(ErrorCode::not_found, "case '" + std::string(case_id) + "' not in corpus");
  if (!bundle.thresholds) throw Error(ErrorCode::state, "model has no calibrated thresholds");
  if (bundle.catalog_hash != corpus.manifest.catalog.hash()) {
    throw Error(ErrorCode::catalog_mismatch, "model and corpus use different activity catalogs");
  }
  const std::size_t n = corpus.manifest.catalog.size();
  if (report.per_label.size() != n) throw Error(ErrorCode::invalid_argument, "report does not match the catalog");

  TimelineExport t;
  t.case_id = c->case_id;
  t.cutoff = cutoff;
  for (std::size_t i = 0; i < n; ++i) {
    if (report.per_label[i].f1 > cutoff) {
      t.labels.push_back(i);
      t.activities.push_back(corpus.manifest.catalog.name(i));
    }
  }

  const FeatureEncoder encoder(corpus.manifest, bundle.stats, bundle.k, bundle.sample_seed);
  const auto samples = encoder.sample_case(*c);
  const auto data = build_dataset(samples, bundle.mask, encoder.layout(bundle.mask));
  const auto preds = decide(bundle.model.predict(data.all()), *bundle.thresholds);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    TimelineMinute m;
    m.minute = samples[r].minute;
    const auto p = preds.row(r);
    const auto& y = samples[r].label;
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i]) m.predicted.push_back(i);
      if (y[i]) m.truth.push_back(i);
    }
    for (std::size_t i : t.labels) {
      m.cells.push_back(p[i] ? (y[i] ? Outcome::tp : Outcome::fp) : (y[i] ? Outcome::fn : Outcome::tn));
    }
    t.minutes.push_back(std::move(m));
  }
  return t;
}

Json timeline_to_json(const TimelineExport& t) {
  Json minutes = Json::array();
  for (const auto& m : t.minutes) {
    Json cells = Json::array();
    for (auto o : m.cells) cells.push_back(to_string(o));
    minutes.push_back({{"minute", m.minute}, {"predicted", m.predicted}, {"truth", m.truth}, {"cells", std::move(cells)}});
  }
  return {{"case_id", t.case_id}, {"cutoff", t.cutoff},       {"labels", t.labels},
          {"activities", t.activities}, {"minutes", std::move(minutes)}};
}

std::string render_timeline(const TimelineExport& t) {
  std::size_t width = 8;
  for (const auto& a : t.activities) width = std::max(width, a.size());
  std::ostringstream out;
  out << t.case_id << "  (activities with test F1 > " << t.cutoff << ")\n";
  out << std::string(width, ' ') << ' ';
  for (const auto& m : t.minutes) out << (m.minute % 10);
  out << '\n';
  static constexpr char glyph[] = {'.', '#', '+', '-'};  // TN TP FP FN
  for (std::size_t a = 0; a < t.activities.size(); ++a) {
    out << t.activities[a] << std::string(width - t.activities[a].size(), ' ') << ' ';
    for (const auto& m : t.minutes) out << glyph[static_cast<int>(m.cells[a])];
    out << '\n';
  }
  out << "# TP  + FP  - FN  . TN\n";
  return out.str();
}

}  // namespace nextmin
