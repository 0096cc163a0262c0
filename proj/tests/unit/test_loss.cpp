#include <doctest.h>

#include <cmath>

#include "nextmin/focal_loss.hpp"
#include "nextmin/random.hpp"
#include "nextmin/training.hpp"

using namespace nextmin;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_SUITE("loss") {

TEST_CASE("closed-form single terms") {
  CHECK(focal_term(0.5, true, 0.75, 2.0) == doctest::Approx(-0.75 * 0.25 * std::log(0.5)).epsilon(1e-12));
  CHECK(focal_term(0.5, true, 0.75, 2.0) == doctest::Approx(0.12996).epsilon(1e-4));
  CHECK(focal_term(0.9, false, 0.75, 2.0) == doctest::Approx(-0.25 * 0.81 * std::log(0.1)).epsilon(1e-12));
  CHECK(focal_term(0.9, false, 0.75, 2.0) == doctest::Approx(0.46627).epsilon(1e-4));
}

TEST_CASE("gamma 0 and alpha 0.5 is half the binary cross-entropy") {
  Rng rng(17);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix p(7, 4);
    LabelMatrix y(7, 4);
    double bce = 0.0;
    for (std::size_t r = 0; r < 7; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        p(r, c) = u(rng);
        y(r, c) = rng() % 2;
        bce += -(y(r, c) ? std::log(p(r, c)) : std::log(1.0 - p(r, c)));
      }
    }
    bce /= 7.0;
    const FocalLossConfig cfg{std::vector<double>(4, 0.5), 0.0};
    CHECK(std::abs(focal_loss_value(p, y, cfg) - 0.5 * bce) < 1e-9);
  }
}

TEST_CASE("loss gradient matches finite differences in logit space") {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 1.5);
  Matrix z(3, 4);
  LabelMatrix y(3, 4);
  for (auto& v : z.values()) v = n(rng);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) y(r, c) = (r + c) % 2;
  const FocalLossConfig cfg{{0.2, 0.5, 0.7, 0.9}, 2.0};

  auto probs_of = [](const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < p.size(); ++i) p.values()[i] = sigmoid(logits.values()[i]);
    return p;
  };
  const auto result = focal_loss(probs_of(z), y, cfg);
  CHECK(result.loss == doctest::Approx(focal_loss_value(probs_of(z), y, cfg)).epsilon(1e-14));
  const double h = 1e-6;
  for (std::size_t i = 0; i < z.size(); ++i) {
    Matrix up = z, down = z;
    up.values()[i] += h;
    down.values()[i] -= h;
    const double numeric =
        (focal_loss_value(probs_of(up), y, cfg) - focal_loss_value(probs_of(down), y, cfg)) / (2 * h);
    CHECK(result.grad_logits.values()[i] == doctest::Approx(numeric).epsilon(1e-6));
  }
}

TEST_CASE("label weights") {
  LabelMatrix y(10, 3);
  for (std::size_t r = 0; r < 3; ++r) y(r, 0) = 1;
  for (std::size_t r = 0; r < 10; ++r) y(r, 2) = 1;
  const auto alpha = compute_label_weights(y);
  CHECK(alpha[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(alpha[1] == 0.99);
  CHECK(alpha[2] == 0.01);
}

}
