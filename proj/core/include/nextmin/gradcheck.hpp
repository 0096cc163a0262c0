#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nextmin/focal_loss.hpp"
#include "nextmin/model.hpp"

namespace nextmin {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates sampled across all parameters (all of them if fewer exist).
  std::size_t coordinates = 200;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central differences of the train-mode focal loss against backward().
/// Relative error is |a - n| / max(|a| + |n|, 1e-6); the floor keeps
/// coordinates with a vanishing true gradient (e.g. the linear bias in front
/// of batch norm) from reporting roundoff as error. The model's parameters
/// and running statistics are restored afterwards.
GradCheckResult grad_check(PredictorModel& model, const Batch& batch, const LabelMatrix& targets,
                           const FocalLossConfig& loss, const GradCheckOptions& options = {});

struct GradCheckFixture {
  PredictorModel model;
  Batch batch;
  LabelMatrix targets;
  FocalLossConfig loss;
};

/// Random small instance: dense input plus a pooled embedding totalling
/// `input_width`, the given hidden widths and labels, batch of `rows`.
GradCheckFixture make_gradcheck_fixture(std::uint64_t seed, std::size_t input_width = 20,
                                        std::vector<std::size_t> hidden = {8, 4},
                                        std::size_t n_labels = 5, std::size_t rows = 3,
                                        double gamma = 2.0, bool with_embedding = true);

}  // namespace nextmin
