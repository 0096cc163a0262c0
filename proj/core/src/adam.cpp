#include "nextmin/adam.hpp"

#include <cmath>

#include "nextmin/error.hpp"

namespace nextmin {

AdamOptimizer::AdamOptimizer(AdamConfig config, const std::vector<Tensor>& params)
    : config_(config) {
  if (!(config_.learning_rate > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "learning rate must be positive");
  }
  for (const auto& p : params) {
    m_.emplace_back(p.values.size(), 0.0);
    v_.emplace_back(p.values.size(), 0.0);
  }
}

void AdamOptimizer::step(std::vector<Tensor>& params, const GradientSet& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw Error(ErrorCode::invalid_argument, "adam: parameter/gradient count mismatch");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].values.size() != m_[t].size() || grads[t].size() != m_[t].size()) {
      throw Error(ErrorCode::invalid_argument, "adam: shape mismatch for '" + params[t].name + "'");
    }
    for (double g : grads[t]) {
      if (!std::isfinite(g)) {
        throw Error(ErrorCode::numeric, "non-finite gradient for parameter '" + params[t].name + "'");
      }
    }
  }

  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& value = params[t].values;
    auto& m = m_[t];
    auto& v = v_[t];
    const auto& g = grads[t];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace nextmin
