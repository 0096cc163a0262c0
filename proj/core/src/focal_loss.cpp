#include "nextmin/focal_loss.hpp"

#include <algorithm>
#include <cmath>

#include "nextmin/error.hpp"
#include "nextmin/model.hpp"

namespace nextmin {

namespace {

void check_shapes(const Matrix& probs, const LabelMatrix& targets, const FocalLossConfig& cfg) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    throw Error(ErrorCode::invalid_argument, "focal loss: probability and target shapes differ");
  }
  if (cfg.alpha.size() != probs.cols()) {
    throw Error(ErrorCode::invalid_argument, "focal loss: alpha length does not match label count");
  }
  if (probs.rows() == 0) throw Error(ErrorCode::invalid_argument, "focal loss: empty batch");
  if (cfg.gamma < 0.0) throw Error(ErrorCode::invalid_argument, "focal loss: gamma must be >= 0");
}

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

}  // namespace

double focal_term(double p, bool positive, double alpha, double gamma) {
  const double pc = clamp_probability(p);
  const double pt = positive ? pc : 1.0 - pc;
  const double at = positive ? alpha : 1.0 - alpha;
  return -at * std::pow(1.0 - pt, gamma) * std::log(pt);
}

LossResult focal_loss(const Matrix& probs, const LabelMatrix& targets, const FocalLossConfig& cfg) {
  check_shapes(probs, targets, cfg);
  const double inv_b = 1.0 / static_cast<double>(probs.rows());
  const double gamma = cfg.gamma;
  LossResult out;
  out.grad_logits = Matrix(probs.rows(), probs.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto pr = probs.row(i);
    auto tr = targets.row(i);
    auto gr = out.grad_logits.row(i);
    for (std::size_t j = 0; j < pr.size(); ++j) {
      const bool positive = tr[j] != 0;
      const double p = clamp_probability(pr[j]);
      const double pt = positive ? p : 1.0 - p;
      const double at = positive ? cfg.alpha[j] : 1.0 - cfg.alpha[j];
      const double q = 1.0 - pt;
      const double log_pt = std::log(pt);
      const double q_gamma = std::pow(q, gamma);
      total += -at * q_gamma * log_pt;
      // d/dz of -a (1-pt)^g log pt, with d pt/dz = +-pt (1-pt).
      const double d_pt = at * (gamma * q_gamma * pt * log_pt - q_gamma * q);
      gr[j] = (positive ? d_pt : -d_pt) * inv_b;
    }
  }
  out.loss = total * inv_b;
  return out;
}

double focal_loss_value(const Matrix& probs, const LabelMatrix& targets, const FocalLossConfig& cfg) {
  check_shapes(probs, targets, cfg);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto pr = probs.row(i);
    auto tr = targets.row(i);
    for (std::size_t j = 0; j < pr.size(); ++j) {
      total += focal_term(pr[j], tr[j] != 0, cfg.alpha[j], cfg.gamma);
    }
  }
  return total / static_cast<double>(probs.rows());
}

}  // namespace nextmin
