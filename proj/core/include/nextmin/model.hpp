#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nextmin/features.hpp"
#include "nextmin/tensor.hpp"

namespace nextmin {

/// Probabilities leave the model clamped to [p, 1 - p] so that logs stay
/// finite and a threshold of 1.0 never fires.
inline constexpr double kProbabilityFloor = 1e-7;

struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// One gradient buffer per parameter tensor, in parameter order.
using GradientSet = std::vector<std::vector<double>>;

struct ModelShape {
  InputLayout input;
  std::size_t n_labels = 0;
  std::size_t embed_dim = 16;
  std::vector<std::size_t> hidden{256, 128};

  std::size_t input_width() const noexcept {
    return input.dense_width() + (input.pooled_embedding() ? embed_dim : 0);
  }

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct BatchNormSettings {
  double momentum = 0.1;
  double epsilon = 1e-5;

  friend bool operator==(const BatchNormSettings&, const BatchNormSettings&) = default;
};

enum class Mode { train, eval };

/// Intermediate values of a train-mode forward pass, consumed by backward().
struct ForwardCache {
  struct Layer {
    Matrix input;
    Matrix normalized;
    std::vector<double> inv_std;
    Matrix activation;
  };

  Matrix input;
  std::vector<std::uint32_t> ids;
  std::vector<Layer> layers;
  Matrix probs;
  bool valid = false;
};

/// Mean of the non-PAD embedding rows; zero when every id is PAD.
std::vector<double> embed_mean_pool(std::span<const std::uint32_t> ids, const Tensor& table);

/// Spreads grad_pooled / count over the contributing rows of grad_table.
void embed_mean_pool_backward(std::span<const std::uint32_t> ids,
                              std::span<const double> grad_pooled, const Tensor& table,
                              std::span<double> grad_table);

/// Embedding mean-pool, then [linear -> batch norm -> ReLU] per hidden
/// layer, then linear -> sigmoid over the labels.
class PredictorModel {
 public:
  PredictorModel() = default;
  PredictorModel(ModelShape shape, std::uint64_t seed, BatchNormSettings bn = {});

  const ModelShape& shape() const noexcept { return shape_; }
  const BatchNormSettings& batch_norm() const noexcept { return bn_; }
  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

  /// Honors the current mode. In train mode batch statistics are used,
  /// running statistics are updated and `cache` (if given) is filled.
  Matrix forward(const Batch& batch, ForwardCache* cache = nullptr);

  /// Eval-mode forward; pure and safe to call concurrently.
  Matrix predict(const Batch& batch) const;

  GradientSet backward(const ForwardCache& cache, const Matrix& grad_logits) const;

  std::vector<Tensor>& parameters() noexcept { return params_; }
  const std::vector<Tensor>& parameters() const noexcept { return params_; }
  /// Batch-norm running means and variances.
  std::vector<Tensor>& buffers() noexcept { return buffers_; }
  const std::vector<Tensor>& buffers() const noexcept { return buffers_; }

  GradientSet zero_gradients() const;
  std::size_t parameter_count() const noexcept;
  /// Index of the embedding table in parameters(), or npos.
  std::size_t embedding_index() const noexcept { return embedding_; }

  /// Re-zeroes the PAD embedding row.
  void reset_pad_row() noexcept;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  struct LayerSlots {
    std::size_t weight = 0, bias = 0, scale = 0, shift = 0;
    std::size_t running_mean = 0, running_var = 0;
  };

  void index_tensors();
  Matrix assemble_input(const Batch& batch) const;
  void check_batch(const Batch& batch) const;

  ModelShape shape_;
  BatchNormSettings bn_;
  Mode mode_ = Mode::train;
  std::vector<Tensor> params_;
  std::vector<Tensor> buffers_;
  std::size_t embedding_ = npos;
  std::vector<LayerSlots> layers_;
  std::size_t out_weight_ = 0;
  std::size_t out_bias_ = 0;

  friend PredictorModel restore_model(ModelShape, BatchNormSettings, std::vector<Tensor>,
                                      std::vector<Tensor>);
};

/// Rebuilds a model from stored tensors (checkpoint loading). Names and
/// shapes must match what the shape implies.
PredictorModel restore_model(ModelShape shape, BatchNormSettings bn, std::vector<Tensor> params,
                             std::vector<Tensor> buffers);

}  // namespace nextmin
