#pragma once

#include <vector>

#include "nextmin/tensor.hpp"

namespace nextmin {

struct FocalLossConfig {
  std::vector<double> alpha;  // per label, in [0, 1]
  double gamma = 2.0;
};

struct LossResult {
  double loss = 0.0;
  /// d loss / d logits, where probs = sigmoid(logits).
  Matrix grad_logits;
};

/// Single element: -a_t (1 - p_t)^gamma log(p_t) with p_t = p, a_t = alpha
/// for a positive and p_t = 1 - p, a_t = 1 - alpha for a negative. p is
/// clamped to [1e-7, 1 - 1e-7].
double focal_term(double p, bool positive, double alpha, double gamma);

/// Sum of focal_term over labels and rows, divided by the row count.
LossResult focal_loss(const Matrix& probs, const LabelMatrix& targets, const FocalLossConfig& cfg);

/// Loss only (no gradient buffer).
double focal_loss_value(const Matrix& probs, const LabelMatrix& targets, const FocalLossConfig& cfg);

}  // namespace nextmin
