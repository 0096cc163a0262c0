#include "nextmin/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "nextmin/error.hpp"

namespace nextmin {

double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) noexcept {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

ThresholdChoice optimal_threshold(std::span<const double> scores,
                                  std::span<const std::uint8_t> labels) {
  if (scores.empty()) throw Error(ErrorCode::invalid_argument, "optimal_threshold: no scores");
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::invalid_argument, "optimal_threshold: scores and labels differ in length");
  }
  const std::size_t positives =
      static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto b) { return b != 0; }));
  if (positives == 0) return {1.0, 0.0};

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Candidates in descending order; `taken` counts scores >= candidate.
  std::size_t taken = 0;
  std::size_t tp = 0;
  auto take_until = [&](double tau) {
    while (taken < order.size() && scores[order[taken]] >= tau) {
      tp += labels[order[taken]] != 0;
      ++taken;
    }
  };
  ThresholdChoice best{1.0, -1.0};
  auto consider = [&](double tau) {
    take_until(tau);
    const double f1 = f1_score(tp, taken - tp, positives - tp);
    if (f1 > best.f1) best = {tau, f1};
  };

  consider(1.0);
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const double hi = scores[order[i]];
    const double lo = scores[order[i + 1]];
    if (hi == lo) continue;
    const double mid = lo + (hi - lo) / 2.0;
    if (mid < 1.0 && mid > 0.0) consider(mid);
  }
  consider(0.0);
  return best;
}

ThresholdVector calibrate_thresholds(const Matrix& probs, const LabelMatrix& truths) {
  if (probs.rows() == 0) throw Error(ErrorCode::invalid_argument, "calibration set is empty");
  if (probs.rows() != truths.rows() || probs.cols() != truths.cols()) {
    throw Error(ErrorCode::invalid_argument, "calibration: probability and label shapes differ");
  }
  ThresholdVector out;
  std::vector<double> column(probs.rows());
  std::vector<std::uint8_t> truth(probs.rows());
  for (std::size_t j = 0; j < probs.cols(); ++j) {
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      column[i] = probs(i, j);
      truth[i] = truths(i, j);
    }
    const auto choice = optimal_threshold(column, truth);
    out.thresholds.push_back(choice.threshold);
    out.validation_f1.push_back(choice.f1);
  }
  return out;
}

ThresholdVector calibrate_thresholds(const PredictorModel& model, const Dataset& validation) {
  if (validation.size() == 0) throw Error(ErrorCode::invalid_argument, "validation set is empty");
  return calibrate_thresholds(model.predict(validation.all()), validation.labels);
}

LabelMatrix decide(const Matrix& probs, const ThresholdVector& thresholds) {
  if (probs.cols() != thresholds.size()) {
    throw Error(ErrorCode::invalid_argument, "decide: threshold count does not match labels");
  }
  LabelMatrix out(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      out(i, j) = probs(i, j) >= thresholds.thresholds[j] ? 1 : 0;
    }
  }
  return out;
}

std::vector<LabelScore> per_label_f1(const LabelMatrix& preds, const LabelMatrix& truths) {
  if (preds.rows() != truths.rows() || preds.cols() != truths.cols()) {
    throw Error(ErrorCode::invalid_argument, "per_label_f1: shapes differ");
  }
  std::vector<LabelScore> out(preds.cols());
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    for (std::size_t j = 0; j < preds.cols(); ++j) {
      const bool p = preds(i, j) != 0;
      const bool t = truths(i, j) != 0;
      out[j].tp += p && t;
      out[j].fp += p && !t;
      out[j].fn += !p && t;
      out[j].support += t;
    }
  }
  for (auto& s : out) s.f1 = f1_score(s.tp, s.fp, s.fn);
  return out;
}

double weighted_f1(std::span<const LabelScore> labels,
                   std::optional<std::span<const std::size_t>> subset) {
  double num = 0.0;
  std::size_t total = 0;
  auto add = [&](const LabelScore& s) {
    num += static_cast<double>(s.support) * s.f1;
    total += s.support;
  };
  if (subset) {
    for (auto j : *subset) add(labels[j]);
  } else {
    for (const auto& s : labels) add(s);
  }
  return total == 0 ? 0.0 : num / static_cast<double>(total);
}

double samples_f1(const LabelMatrix& preds, const LabelMatrix& truths, double empty_score) {
  if (preds.rows() != truths.rows() || preds.cols() != truths.cols()) {
    throw Error(ErrorCode::invalid_argument, "samples_f1: shapes differ");
  }
  if (preds.rows() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    std::size_t both = 0, np = 0, nt = 0;
    for (std::size_t j = 0; j < preds.cols(); ++j) {
      const bool p = preds(i, j) != 0;
      const bool t = truths(i, j) != 0;
      both += p && t;
      np += p;
      nt += t;
    }
    sum += (np + nt == 0) ? empty_score
                          : 2.0 * static_cast<double>(both) / static_cast<double>(np + nt);
  }
  return sum / static_cast<double>(preds.rows());
}

EvalReport evaluate_predictions(const LabelMatrix& preds, const LabelMatrix& truths,
                                const ActivityCatalog& catalog, double empty_score) {
  if (preds.cols() != catalog.size()) {
    throw Error(ErrorCode::invalid_argument, "evaluation: label count does not match the catalog");
  }
  EvalReport r;
  r.labels = catalog.labels();
  r.per_label = per_label_f1(preds, truths);
  r.weighted_f1 = weighted_f1(r.per_label);
  r.samples_f1 = samples_f1(preds, truths, empty_score);
  r.samples = preds.rows();
  return r;
}

Json eval_report_to_json(const EvalReport& report) {
  Json per_label = Json::array();
  for (std::size_t j = 0; j < report.per_label.size(); ++j) {
    const auto& s = report.per_label[j];
    per_label.push_back({{"label", report.labels.at(j)},
                         {"tp", s.tp},
                         {"fp", s.fp},
                         {"fn", s.fn},
                         {"support", s.support},
                         {"f1", s.f1}});
  }
  return {{"kind", "nextmin.eval_report"},
          {"samples", report.samples},
          {"weighted_f1", report.weighted_f1},
          {"samples_f1", report.samples_f1},
          {"per_label", std::move(per_label)}};
}

EvalReport eval_report_from_json(const Json& j) {
  EvalReport r;
  r.samples = j.at("samples").get<std::size_t>();
  r.weighted_f1 = j.at("weighted_f1").get<double>();
  r.samples_f1 = j.at("samples_f1").get<double>();
  for (const auto& e : j.at("per_label")) {
    r.labels.push_back(e.at("label").get<std::string>());
    r.per_label.push_back({e.at("tp").get<std::size_t>(), e.at("fp").get<std::size_t>(),
                           e.at("fn").get<std::size_t>(), e.at("support").get<std::size_t>(),
                           e.at("f1").get<double>()});
  }
  return r;
}

std::string render_eval_report(const EvalReport& report) {
  std::size_t width = 8;
  for (const auto& l : report.labels) width = std::max(width, l.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "label" << std::right << std::setw(7)
     << "TP" << std::setw(7) << "FP" << std::setw(7) << "FN" << std::setw(9) << "support"
     << std::setw(8) << "F1" << '\n';
  os << std::fixed << std::setprecision(3);
  for (std::size_t j = 0; j < report.per_label.size(); ++j) {
    const auto& s = report.per_label[j];
    os << std::left << std::setw(static_cast<int>(width)) << report.labels[j] << std::right
       << std::setw(7) << s.tp << std::setw(7) << s.fp << std::setw(7) << s.fn << std::setw(9)
       << s.support << std::setw(8) << s.f1 << '\n';
  }
  os << "\nsamples: " << report.samples << "\nweighted F1: " << report.weighted_f1
     << "\nsamples F1:  " << report.samples_f1 << '\n';
  return os.str();
}

Json thresholds_to_json(const ThresholdVector& t) {
  return {{"thresholds", t.thresholds}, {"validation_f1", t.validation_f1}};
}

ThresholdVector thresholds_from_json(const Json& j) {
  return {j.at("thresholds").get<std::vector<double>>(),
          j.at("validation_f1").get<std::vector<double>>()};
}

}  // namespace nextmin
