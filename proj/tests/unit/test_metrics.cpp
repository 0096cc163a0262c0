#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "nextmin/error.hpp"
#include "nextmin/metrics.hpp"
#include "nextmin/random.hpp"

using namespace nextmin;

namespace {

/// Truths s1={A}, s2={A,B}, s3={B}; preds s1={A}, s2={B}, s3={A,B}.
void fixture(LabelMatrix& preds, LabelMatrix& truths) {
  truths = LabelMatrix(3, 2);
  preds = LabelMatrix(3, 2);
  truths(0, 0) = 1;
  truths(1, 0) = truths(1, 1) = 1;
  truths(2, 1) = 1;
  preds(0, 0) = 1;
  preds(1, 1) = 1;
  preds(2, 0) = preds(2, 1) = 1;
}

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

Counts count_at(const std::vector<double>& s, const std::vector<std::uint8_t>& y, double tau) {
  Counts c;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool p = s[i] >= tau;
    if (p && y[i]) ++c.tp;
    else if (p) ++c.fp;
    else if (y[i]) ++c.fn;
  }
  return c;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("worked threshold example") {
  const std::vector<double> s{0.1, 0.35, 0.4, 0.8};
  const std::vector<std::uint8_t> y{0, 1, 0, 1};
  const auto c = optimal_threshold(s, y);
  CHECK(c.threshold == doctest::Approx(0.225).epsilon(1e-15));
  CHECK(c.f1 == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("separated scores and the no-positive convention") {
  const std::vector<double> s{0.1, 0.2, 0.7, 0.9};
  const auto c = optimal_threshold(s, std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(c.f1 == 1.0);
  CHECK(c.threshold == doctest::Approx(0.45).epsilon(1e-15));
  const auto none = optimal_threshold(s, std::vector<std::uint8_t>{0, 0, 0, 0});
  CHECK(none.threshold == 1.0);
  CHECK(none.f1 == 0.0);
}

TEST_CASE("exhaustive oracle over 1000 random instances") {
  Rng rng(2024);
  for (int instance = 0; instance < 1000; ++instance) {
    const std::size_t n = 1 + rng() % 30;
    const unsigned levels = 2 + static_cast<unsigned>(rng() % 20);  // forces ties
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = (1.0 + static_cast<double>(rng() % levels)) / (levels + 1.0);
      y[i] = static_cast<std::uint8_t>(rng() % 3 == 0);
    }
    const auto got = optimal_threshold(s, y);

    // Every achievable prediction set is {score >= v} for a distinct score v,
    // or the empty set.
    std::set<double> distinct(s.begin(), s.end());
    std::vector<double> cuts(distinct.begin(), distinct.end());
    cuts.push_back(2.0);
    double brute = 0.0;
    for (double v : cuts) {
      const auto c = count_at(s, y, v);
      const std::size_t denom = 2 * c.tp + c.fp + c.fn;
      if (denom) brute = std::max(brute, 2.0 * c.tp / denom);
    }
    REQUIRE(got.f1 == brute);

    // The returned threshold actually achieves the reported score.
    const auto at = count_at(s, y, got.threshold);
    const std::size_t denom = 2 * at.tp + at.fp + at.fn;
    CHECK((denom ? 2.0 * at.tp / denom : 0.0) == got.f1);
  }
}

TEST_CASE("ties prefer the largest threshold") {
  // tau = 0.7 and tau = 0 both score 2/3.
  const auto c = optimal_threshold(std::vector<double>{0.2, 0.4, 0.6, 0.8},
                                   std::vector<std::uint8_t>{1, 0, 0, 1});
  CHECK(c.f1 == 2.0 / 3.0);
  CHECK(c.threshold == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("calibration and decisions") {
  Matrix p(4, 2);
  LabelMatrix y(4, 2);
  const double col0[] = {0.1, 0.35, 0.4, 0.8};
  const std::uint8_t lab0[] = {0, 1, 0, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    p(i, 0) = col0[i];
    y(i, 0) = lab0[i];
    p(i, 1) = 0.3;
  }
  const auto t = calibrate_thresholds(p, y);
  REQUIRE(t.size() == 2);
  CHECK(t.thresholds[0] == doctest::Approx(0.225));
  CHECK(t.thresholds[1] == 1.0);
  CHECK(calibrate_thresholds(p, y) == t);

  ThresholdVector fixed{{0.5, 0.3}, {0, 0}};
  const auto d = decide(p, fixed);
  CHECK(d(3, 0) == 1);
  CHECK(d(0, 0) == 0);
  CHECK(d(0, 1) == 1);  // exactly at the threshold

  ThresholdVector high{{0.9, 0.9}, {0, 0}};
  const auto empty = decide(p, high);
  for (std::size_t i = 0; i < 4; ++i) CHECK((empty(i, 0) | empty(i, 1)) == 0);
}

TEST_CASE("fixture scores") {
  LabelMatrix preds, truths;
  fixture(preds, truths);
  const auto per = per_label_f1(preds, truths);
  CHECK(std::abs(per[0].f1 - 0.5) < 1e-9);
  CHECK(std::abs(per[1].f1 - 1.0) < 1e-9);
  CHECK(per[0].support == 2);
  CHECK(per[1].support == 2);
  CHECK(std::abs(weighted_f1(per) - 0.75) < 1e-9);
  CHECK(std::abs(samples_f1(preds, truths) - 7.0 / 9.0) < 1e-9);

  const std::vector<std::size_t> only_b{1};
  CHECK(weighted_f1(per, std::span<const std::size_t>(only_b)) == 1.0);
}

TEST_CASE("degenerate metric cases") {
  LabelMatrix t(2, 3), p(2, 3);
  t(0, 0) = p(0, 0) = 1;
  t(1, 1) = p(1, 1) = 1;
  const auto per = per_label_f1(p, t);
  CHECK(per[0].f1 == 1.0);
  CHECK(per[2].f1 == 0.0);
  CHECK(per[2].support == 0);
  CHECK(weighted_f1(per) == 1.0);

  LabelMatrix empty_t(1, 2), empty_p(1, 2);
  CHECK(samples_f1(empty_p, empty_t) == 1.0);

  LabelMatrix t3(1, 3), p3(1, 3);
  t3(0, 0) = t3(0, 1) = 1;
  p3(0, 1) = p3(0, 2) = 1;
  CHECK(samples_f1(p3, t3) == 0.5);
}

TEST_CASE("report JSON round-trip") {
  LabelMatrix preds, truths;
  fixture(preds, truths);
  const auto r = evaluate_predictions(preds, truths, ActivityCatalog({"A", "B"}));
  CHECK(eval_report_from_json(Json::parse(eval_report_to_json(r).dump())) == r);
  const ThresholdVector t{{0.25, 1.0}, {0.5, 0.0}};
  CHECK(thresholds_from_json(thresholds_to_json(t)) == t);
  CHECK(render_eval_report(r).find("weighted F1") != std::string::npos);
}

}
