// nextmin: generate corpora, preprocess, train, evaluate, ablate, export
// timelines and serve predictions.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "nextmin/checkpoint.hpp"
#include "nextmin/error.hpp"
#include "nextmin/generator.hpp"
#include "nextmin/gradcheck.hpp"
#include "nextmin/harness.hpp"
#include "nextmin/sample_cache.hpp"
#include "nextmin/service/http_api.hpp"
#include "nextmin/training.hpp"

namespace fs = std::filesystem;
using namespace nextmin;

namespace {

constexpr std::uint64_t kDefaultSeed = 2023;

struct Common {
  std::uint64_t seed = kDefaultSeed;
  std::string mask = "all";
  std::size_t k = 5;
  std::size_t embed_dim = 16;
  std::size_t batch = 64;
  double lr = 1e-4;
  double gamma = 2.0;
  std::size_t patience = 10;
  std::size_t max_epochs = 300;
  std::vector<std::size_t> hidden{256, 128};
  std::string out;
};

void add_train_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Training seed (initialization and shuffling)")->capture_default_str();
  cmd->add_option("--mask", c.mask, "Context blocks: last_k, all_occurred, dynamic, static, timestamp, or all")
      ->capture_default_str();
  cmd->add_option("--embed-dim", c.embed_dim, "Activity embedding size")->capture_default_str();
  cmd->add_option("--batch", c.batch, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lr", c.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--gamma", c.gamma, "Focal loss focusing parameter")->capture_default_str();
  cmd->add_option("--patience", c.patience, "Early-stopping patience in epochs")->capture_default_str();
  cmd->add_option("--max-epochs", c.max_epochs, "Epoch limit")->capture_default_str();
  cmd->add_option("--hidden", c.hidden, "Hidden layer widths")->capture_default_str();
}

TrainConfig train_config(const Common& c) {
  TrainConfig t;
  t.batch_size = c.batch;
  t.learning_rate = c.lr;
  t.gamma = c.gamma;
  t.patience = c.patience;
  t.max_epochs = c.max_epochs;
  t.seed = c.seed;
  t.mask = ContextMask::parse(c.mask);
  t.hidden = c.hidden;
  t.embed_dim = c.embed_dim;
  return t;
}

void write_report(const fs::path& dir, const std::string& stem, const Json& json, const std::string& table) {
  write_json_file(dir / (stem + ".json"), json, 2);
  write_text_file(dir / (stem + ".txt"), table);
  std::cout << table;
}

int cmd_generate(const fs::path& scenario_path, std::size_t cases, const Common& c, const fs::path& dump) {
  if (!dump.empty()) {
    write_json_file(dump, scenario_to_json(default_scenario()), 2);
    std::cout << "wrote default scenario to " << dump << "\n";
    if (c.out.empty()) return 0;
  }
  if (c.out.empty()) throw Error(ErrorCode::invalid_argument, "--out is required");
  const auto scenario =
      scenario_path.empty() ? default_scenario() : scenario_from_json(read_json_file(scenario_path));
  const auto generated = generate_dataset(scenario, cases, c.seed);
  save_generated(c.out, scenario, generated);
  std::int64_t minutes = 0;
  std::size_t vitals = 0;
  for (const auto& log : generated.corpus.cases) {
    minutes += log.minutes();
    vitals += log.vitals.size();
  }
  std::printf("%zu cases, %lld minutes, %.1f vitals records per case, %zu activities -> %s\n",
              generated.corpus.cases.size(), static_cast<long long>(minutes),
              static_cast<double>(vitals) / static_cast<double>(cases), scenario.activities.size(), c.out.c_str());
  return 0;
}

int cmd_preprocess(const fs::path& corpus_dir, const Common& c) {
  if (c.out.empty()) throw Error(ErrorCode::invalid_argument, "--out is required");
  const auto corpus = load_corpus(corpus_dir);
  const auto cache = preprocess(corpus, c.k, c.seed, ContextMask::parse(c.mask));
  save_sample_cache(c.out, cache);
  std::printf("%zu samples (train %zu / validation %zu / test %zu cases), hash %016llx -> %s\n",
              cache.samples.size(), cache.split.train.size(), cache.split.validation.size(),
              cache.split.test.size(), static_cast<unsigned long long>(cache_hash(cache)), c.out.c_str());
  return 0;
}

int cmd_train(const fs::path& cache_path, const Common& c) {
  if (c.out.empty()) throw Error(ErrorCode::invalid_argument, "--out is required");
  const fs::path dir = c.out;
  fs::create_directories(dir);
  const auto cache = load_sample_cache(cache_path);
  const auto cfg = train_config(c);
  std::ofstream log(dir / "history.jsonl");
  const auto r = run_experiment(cache, cfg, [&](const EpochRecord& e) {
    log << epoch_record_to_json(e).dump() << "\n" << std::flush;
    std::printf("epoch %4zu  train %.5f  validation %.5f  validation wF1@0.5 %.4f\n", e.epoch, e.train_loss,
                e.validation_loss, e.validation_weighted_f1);
  });
  save_checkpoint(dir / "model.ckpt", make_bundle(cache, cfg, r));
  write_json_file(dir / "thresholds.json", thresholds_to_json(r.thresholds), 2);
  std::printf("trained %zu epochs in %.1fs (best epoch %zu)\n", r.trained.history.epochs(), r.train_seconds,
              r.trained.history.best_epoch.value_or(0));
  write_report(dir, "report", eval_report_to_json(r.test_report), render_eval_report(r.test_report));
  return 0;
}

const std::vector<std::string>& split_ids(const SampleCache& cache, const std::string& split) {
  if (split == "train") return cache.split.train;
  if (split == "validation") return cache.split.validation;
  if (split == "test") return cache.split.test;
  throw Error(ErrorCode::invalid_argument, "split must be train, validation or test");
}

int cmd_evaluate(const fs::path& cache_path, const fs::path& model_path, const std::string& split, bool baseline,
                 const Common& c) {
  const auto cache = load_sample_cache(cache_path);
  const auto samples = cache.select(split_ids(cache, split));
  EvalReport report;
  if (baseline) {
    const auto fb = FrequencyBaseline::fit(cache.select(cache.split.train));
    std::vector<std::int64_t> minutes;
    LabelMatrix truths(samples.size(), cache.manifest.catalog.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      minutes.push_back(samples[i].minute);
      std::copy(samples[i].label.begin(), samples[i].label.end(), truths.row(i).begin());
    }
    report = evaluate_predictions(fb.predict(minutes), truths, cache.manifest.catalog);
  } else {
    const auto bundle = load_checkpoint(model_path, cache.manifest.catalog.hash());
    if (!bundle.thresholds) throw Error(ErrorCode::state, "model has no thresholds; run calibrate first");
    const auto data = build_dataset(samples, bundle.mask, cache.encoder().layout(bundle.mask));
    report = evaluate_predictions(decide(bundle.model.predict(data.all()), *bundle.thresholds), data.labels,
                                  cache.manifest.catalog);
  }
  if (c.out.empty()) {
    std::cout << render_eval_report(report);
  } else {
    fs::create_directories(c.out);
    write_report(c.out, baseline ? "baseline_report" : "report", eval_report_to_json(report),
                 render_eval_report(report));
  }
  return 0;
}

int cmd_calibrate(const fs::path& cache_path, const fs::path& model_path, const Common& c) {
  const auto cache = load_sample_cache(cache_path);
  auto bundle = load_checkpoint(model_path, cache.manifest.catalog.hash());
  const auto data =
      build_dataset(cache.select(cache.split.validation), bundle.mask, cache.encoder().layout(bundle.mask));
  bundle.thresholds = calibrate_thresholds(bundle.model, data);
  const fs::path out = c.out.empty() ? model_path : fs::path(c.out);
  save_checkpoint(out, bundle);
  for (std::size_t i = 0; i < bundle.thresholds->size(); ++i) {
    std::printf("%-32s tau %.4f  validation F1 %.4f\n", cache.manifest.catalog.name(i).c_str(),
                bundle.thresholds->thresholds[i], bundle.thresholds->validation_f1[i]);
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_ablate(const fs::path& cache_path, const fs::path& scenario_path, std::size_t jobs, const Common& c) {
  if (c.out.empty()) throw Error(ErrorCode::invalid_argument, "--out is required");
  const auto cache = load_sample_cache(cache_path);
  AblationConfig cfg;
  cfg.train = train_config(c);
  cfg.jobs = jobs;
  if (!scenario_path.empty()) {
    cfg.focus_labels = scenario_from_json(read_json_file(scenario_path)).deterministic_labels();
  }
  const auto rows = run_ablation(cache, cfg, [](const AblationRow& row) {
    std::printf("%-42s %s wF1 %.4f sF1 %.4f (%zu epochs, %.1fs)\n", row.name.c_str(), row.failed ? "FAILED" : "",
                row.weighted_f1, row.samples_f1, row.epochs, row.train_seconds);
  });

  const auto fb = FrequencyBaseline::fit(cache.select(cache.split.train));
  const auto test = cache.select(cache.split.test);
  std::vector<std::int64_t> minutes;
  LabelMatrix truths(test.size(), cache.manifest.catalog.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    minutes.push_back(test[i].minute);
    std::copy(test[i].label.begin(), test[i].label.end(), truths.row(i).begin());
  }
  const auto baseline = evaluate_predictions(fb.predict(minutes), truths, cache.manifest.catalog);

  Json report = ablation_to_json(rows);
  report["baseline"] = {{"weighted_f1", baseline.weighted_f1}, {"samples_f1", baseline.samples_f1}};
  std::string table = render_ablation(rows);
  char line[128];
  std::snprintf(line, sizeof line, "%-42s %8.3f %8.3f\n", "Frequency baseline", baseline.weighted_f1,
                baseline.samples_f1);
  table += line;
  fs::create_directories(c.out);
  write_report(c.out, "ablation", report, table);
  return 0;
}

int cmd_timeline(const fs::path& corpus_dir, const fs::path& model_path, const fs::path& report_path,
                 const std::string& case_id, double cutoff, const Common& c) {
  const auto corpus = load_corpus(corpus_dir);
  const auto bundle = load_checkpoint(model_path, corpus.manifest.catalog.hash());
  const auto report = eval_report_from_json(read_json_file(report_path));
  const auto t = export_timeline(corpus, case_id, bundle, report, cutoff);
  const auto text = render_timeline(t);
  if (c.out.empty()) {
    std::cout << text;
  } else {
    fs::create_directories(c.out);
    write_report(c.out, "timeline_" + case_id, timeline_to_json(t), text);
  }
  return 0;
}

service::ApiServer* g_server = nullptr;

int cmd_serve(const fs::path& corpus_dir, const fs::path& model_path, const fs::path& report_path,
              const std::string& host, int port) {
  service::SessionManager manager(load_corpus(corpus_dir));
  if (!model_path.empty()) {
    std::optional<fs::path> report;
    if (!report_path.empty()) report = report_path;
    std::cout << "loaded model " << manager.load_model(model_path, report) << " from " << model_path << "\n";
  }
  service::ApiServer server(manager);
  const int bound = server.bind(host, port);
  if (bound < 0) throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port));
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << "listening on http://" << host << ":" << bound << "\n" << std::flush;
  server.listen();
  return 0;
}

int cmd_gradcheck(const Common& c, double step, std::size_t coordinates) {
  auto fixture = make_gradcheck_fixture(c.seed);
  GradCheckOptions opts;
  opts.step = step;
  opts.coordinates = coordinates;
  opts.seed = c.seed;
  const auto r = grad_check(fixture.model, fixture.batch, fixture.targets, fixture.loss, opts);
  std::printf("checked %zu coordinates, max relative error %.3e (%s[%zu])\n", r.checked, r.max_relative_error,
              r.worst_parameter.c_str(), r.worst_index);
  return r.max_relative_error < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Next-minute activity prediction: data, training, evaluation and serving"};
  app.require_subcommand(1);
  Common c;

  fs::path corpus_dir, cache_path, model_path, report_path, scenario_path, dump_path;
  std::size_t cases = 201, jobs = 1, coordinates = 200;
  std::string split = "test", case_id, host = "127.0.0.1";
  double cutoff = 0.5, step = 1e-5;
  int port = 8080;
  bool baseline = false;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic corpus from a scenario");
  gen->add_option("--scenario", scenario_path, "Scenario JSON (default: built-in)");
  gen->add_option("--cases", cases, "Number of cases")->capture_default_str();
  gen->add_option("--seed", c.seed, "Corpus seed")->capture_default_str();
  gen->add_option("--out", c.out, "Output corpus directory");
  gen->add_option("--dump-scenario", dump_path, "Write the built-in scenario to this file");

  auto* pre = app.add_subcommand("preprocess", "Split a corpus and build the per-minute sample cache");
  pre->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  pre->add_option("--k", c.k, "Recent activities per sample")->capture_default_str();
  pre->add_option("--seed", c.seed, "Split and subsampling seed")->capture_default_str();
  pre->add_option("--mask", c.mask, "Default context mask recorded in the cache")->capture_default_str();
  pre->add_option("--out", c.out, "Output cache file")->required();

  auto* tr = app.add_subcommand("train", "Train, calibrate on validation and evaluate on test");
  tr->add_option("--cache", cache_path, "Sample cache")->required();
  add_train_flags(tr, c);
  tr->add_option("--out", c.out, "Output directory")->required();

  auto* ev = app.add_subcommand("evaluate", "Evaluate a calibrated model (or the frequency baseline)");
  ev->add_option("--cache", cache_path, "Sample cache")->required();
  ev->add_option("--model", model_path, "Checkpoint");
  ev->add_option("--split", split, "train, validation or test")->capture_default_str();
  ev->add_flag("--baseline", baseline, "Evaluate the frequency baseline instead of a model");
  ev->add_option("--out", c.out, "Output directory");

  auto* cal = app.add_subcommand("calibrate", "Recompute per-label thresholds on the validation split");
  cal->add_option("--cache", cache_path, "Sample cache")->required();
  cal->add_option("--model", model_path, "Checkpoint")->required();
  cal->add_option("--out", c.out, "Output checkpoint (default: overwrite)");

  auto* abl = app.add_subcommand("ablate", "Run the 12 context-combination arms and the frequency baseline");
  abl->add_option("--cache", cache_path, "Sample cache")->required();
  abl->add_option("--scenario", scenario_path, "Scenario JSON; adds F1 over deterministic-rule labels");
  abl->add_option("--jobs", jobs, "Arms trained in parallel")->capture_default_str();
  add_train_flags(abl, c);
  abl->add_option("--out", c.out, "Output directory")->required();

  auto* tl = app.add_subcommand("timeline", "Export the per-minute prediction timeline of one case");
  tl->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  tl->add_option("--model", model_path, "Checkpoint")->required();
  tl->add_option("--report", report_path, "Test report JSON used for the F1 filter")->required();
  tl->add_option("--case", case_id, "Case id")->required();
  tl->add_option("--cutoff", cutoff, "Show activities with test F1 above this")->capture_default_str();
  tl->add_option("--out", c.out, "Output directory");

  auto* srv = app.add_subcommand("serve", "Serve sessions over HTTP");
  srv->add_option("--corpus", corpus_dir, "Corpus directory (replay cases and catalog)")->required();
  srv->add_option("--model", model_path, "Checkpoint to preload");
  srv->add_option("--report", report_path, "Test report for timeline filtering");
  srv->add_option("--host", host, "Bind address")->capture_default_str();
  srv->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc->add_option("--seed", c.seed, "Fixture seed")->capture_default_str();
  gc->add_option("--step", step, "Central-difference step")->capture_default_str();
  gc->add_option("--coordinates", coordinates, "Coordinates checked per tensor")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_generate(scenario_path, cases, c, dump_path);
    if (*pre) return cmd_preprocess(corpus_dir, c);
    if (*tr) return cmd_train(cache_path, c);
    if (*ev) {
      if (!baseline && model_path.empty()) throw Error(ErrorCode::invalid_argument, "--model or --baseline required");
      return cmd_evaluate(cache_path, model_path, split, baseline, c);
    }
    if (*cal) return cmd_calibrate(cache_path, model_path, c);
    if (*abl) return cmd_ablate(cache_path, scenario_path, jobs, c);
    if (*tl) return cmd_timeline(corpus_dir, model_path, report_path, case_id, cutoff, c);
    if (*srv) return cmd_serve(corpus_dir, model_path, report_path, host, port);
    if (*gc) return cmd_gradcheck(c, step, coordinates);
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", std::string(to_string(e.code())).c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
