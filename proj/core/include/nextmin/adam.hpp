#pragma once

#include <cstdint>
#include <vector>

#include "nextmin/model.hpp"

namespace nextmin {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Adam with bias correction. Moments are shaped like the parameters they
/// were created for.
class AdamOptimizer {
 public:
  AdamOptimizer(AdamConfig config, const std::vector<Tensor>& params);

  /// Throws Error(numeric) naming the first parameter with a non-finite
  /// gradient; parameters are left untouched in that case.
  void step(std::vector<Tensor>& params, const GradientSet& grads);

  std::uint64_t steps() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }
  const GradientSet& first_moment() const noexcept { return m_; }
  const GradientSet& second_moment() const noexcept { return v_; }

 private:
  AdamConfig config_;
  GradientSet m_;
  GradientSet v_;
  std::uint64_t step_ = 0;
};

}  // namespace nextmin
