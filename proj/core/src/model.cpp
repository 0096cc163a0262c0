#include "nextmin/model.hpp"

#include <algorithm>
#include <cmath>

#include "nextmin/error.hpp"
#include "nextmin/random.hpp"

namespace nextmin {

namespace {

Tensor make_tensor(std::string name, std::size_t rows, std::size_t cols, double fill = 0.0) {
  return Tensor{std::move(name), rows, cols, std::vector<double>(rows * cols, fill)};
}

// y = x W + b, W stored (in x out). Zero inputs are skipped: one-hot blocks
// and ReLU outputs are mostly zero.
Matrix linear(const Matrix& x, const Tensor& w, const Tensor& b) {
  Matrix y(x.rows(), w.cols);
  const double* wd = w.values.data();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto yr = y.row(i);
    std::copy(b.values.begin(), b.values.end(), yr.begin());
    auto xr = x.row(i);
    for (std::size_t p = 0; p < w.rows; ++p) {
      const double xv = xr[p];
      if (xv == 0.0) continue;
      const double* wr = wd + p * w.cols;
      for (std::size_t j = 0; j < w.cols; ++j) yr[j] += xv * wr[j];
    }
  }
  return y;
}

void linear_backward_weights(const Matrix& x, const Matrix& dy, std::vector<double>& dw,
                             std::vector<double>& db) {
  const std::size_t out = dy.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    auto dyr = dy.row(i);
    for (std::size_t p = 0; p < x.cols(); ++p) {
      const double xv = xr[p];
      if (xv == 0.0) continue;
      double* dwr = dw.data() + p * out;
      for (std::size_t j = 0; j < out; ++j) dwr[j] += xv * dyr[j];
    }
    for (std::size_t j = 0; j < out; ++j) db[j] += dyr[j];
  }
}

Matrix linear_backward_input(const Matrix& dy, const Tensor& w) {
  Matrix dx(dy.rows(), w.rows);
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    auto dyr = dy.row(i);
    auto dxr = dx.row(i);
    for (std::size_t p = 0; p < w.rows; ++p) {
      const double* wr = w.values.data() + p * w.cols;
      double acc = 0.0;
      for (std::size_t j = 0; j < w.cols; ++j) acc += dyr[j] * wr[j];
      dxr[p] = acc;
    }
  }
  return dx;
}

double sigmoid(double z) {
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

Matrix sigmoid_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  auto src = logits.values();
  auto dst = p.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sigmoid(src[i]);
  return p;
}

}  // namespace

std::vector<double> embed_mean_pool(std::span<const std::uint32_t> ids, const Tensor& table) {
  std::vector<double> pooled(table.cols, 0.0);
  std::size_t count = 0;
  for (auto id : ids) {
    if (id >= table.rows) {
      throw Error(ErrorCode::invalid_argument, "embedding id " + std::to_string(id) + " out of range");
    }
    if (id == kPadId) continue;
    ++count;
    const double* row = table.values.data() + id * table.cols;
    for (std::size_t j = 0; j < table.cols; ++j) pooled[j] += row[j];
  }
  if (count > 0) {
    for (auto& v : pooled) v /= static_cast<double>(count);
  }
  return pooled;
}

void embed_mean_pool_backward(std::span<const std::uint32_t> ids,
                              std::span<const double> grad_pooled, const Tensor& table,
                              std::span<double> grad_table) {
  const auto count = std::count_if(ids.begin(), ids.end(), [](auto id) { return id != kPadId; });
  if (count == 0) return;
  const double share = 1.0 / static_cast<double>(count);
  for (auto id : ids) {
    if (id == kPadId) continue;
    double* row = grad_table.data() + id * table.cols;
    for (std::size_t j = 0; j < table.cols; ++j) row[j] += grad_pooled[j] * share;
  }
}

PredictorModel::PredictorModel(ModelShape shape, std::uint64_t seed, BatchNormSettings bn)
    : shape_(std::move(shape)), bn_(bn) {
  if (shape_.n_labels == 0) throw Error(ErrorCode::invalid_argument, "model needs at least one label");
  if (shape_.input_width() == 0) throw Error(ErrorCode::invalid_argument, "model input width is zero");
  if (shape_.input.pooled_embedding() && shape_.embed_dim == 0) {
    throw Error(ErrorCode::invalid_argument, "embedding dimension must be positive");
  }
  Rng rng(seed);
  auto he_uniform = [&](Tensor& t) {
    const double bound = std::sqrt(6.0 / static_cast<double>(t.rows));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.values) v = dist(rng);
  };

  if (shape_.input.pooled_embedding()) {
    auto table = make_tensor("embedding", shape_.n_labels + 1, shape_.embed_dim);
    std::normal_distribution<double> dist(0.0, 0.01);
    for (auto& v : table.values) v = dist(rng);
    std::fill_n(table.values.begin(), shape_.embed_dim, 0.0);
    params_.push_back(std::move(table));
  }
  std::size_t in = shape_.input_width();
  for (std::size_t l = 0; l < shape_.hidden.size(); ++l) {
    const std::size_t out = shape_.hidden[l];
    if (out == 0) throw Error(ErrorCode::invalid_argument, "hidden width must be positive");
    const std::string prefix = "hidden." + std::to_string(l) + ".";
    auto w = make_tensor(prefix + "weight", in, out);
    he_uniform(w);
    params_.push_back(std::move(w));
    params_.push_back(make_tensor(prefix + "bias", 1, out));
    params_.push_back(make_tensor(prefix + "bn_scale", 1, out, 1.0));
    params_.push_back(make_tensor(prefix + "bn_shift", 1, out));
    buffers_.push_back(make_tensor(prefix + "running_mean", 1, out));
    buffers_.push_back(make_tensor(prefix + "running_var", 1, out, 1.0));
    in = out;
  }
  auto w = make_tensor("output.weight", in, shape_.n_labels);
  he_uniform(w);
  params_.push_back(std::move(w));
  params_.push_back(make_tensor("output.bias", 1, shape_.n_labels));
  index_tensors();
}

void PredictorModel::index_tensors() {
  std::size_t p = 0;
  std::size_t b = 0;
  embedding_ = shape_.input.pooled_embedding() ? p++ : npos;
  layers_.clear();
  for (std::size_t l = 0; l < shape_.hidden.size(); ++l) {
    LayerSlots s;
    s.weight = p++;
    s.bias = p++;
    s.scale = p++;
    s.shift = p++;
    s.running_mean = b++;
    s.running_var = b++;
    layers_.push_back(s);
  }
  out_weight_ = p++;
  out_bias_ = p++;
}

PredictorModel restore_model(ModelShape shape, BatchNormSettings bn, std::vector<Tensor> params,
                             std::vector<Tensor> buffers) {
  // Build a reference model for names/shapes, then adopt the stored values.
  PredictorModel model(std::move(shape), 0, bn);
  auto same_layout = [](const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].name != b[i].name || a[i].rows != b[i].rows || a[i].cols != b[i].cols ||
          b[i].values.size() != b[i].rows * b[i].cols) {
        return false;
      }
    }
    return true;
  };
  if (!same_layout(model.params_, params) || !same_layout(model.buffers_, buffers)) {
    throw Error(ErrorCode::corrupt, "stored tensors do not match the model architecture");
  }
  model.params_ = std::move(params);
  model.buffers_ = std::move(buffers);
  model.mode_ = Mode::eval;
  return model;
}

std::size_t PredictorModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : params_) n += t.values.size();
  return n;
}

GradientSet PredictorModel::zero_gradients() const {
  GradientSet g;
  g.reserve(params_.size());
  for (const auto& t : params_) g.emplace_back(t.values.size(), 0.0);
  return g;
}

void PredictorModel::reset_pad_row() noexcept {
  if (embedding_ == npos) return;
  auto& table = params_[embedding_];
  std::fill_n(table.values.begin(), table.cols, 0.0);
}

void PredictorModel::check_batch(const Batch& batch) const {
  if (batch.rows() == 0) throw Error(ErrorCode::invalid_argument, "empty batch");
  if (batch.dense.cols() != shape_.input.dense_width()) {
    throw Error(ErrorCode::invalid_argument,
                "batch width " + std::to_string(batch.dense.cols()) + " does not match model width " +
                    std::to_string(shape_.input.dense_width()));
  }
  if (batch.ids.size() != batch.rows() * shape_.input.k) {
    throw Error(ErrorCode::invalid_argument, "batch id count does not match rows * k");
  }
}

Matrix PredictorModel::assemble_input(const Batch& batch) const {
  const auto& layout = shape_.input;
  const std::size_t e = layout.pooled_embedding() ? shape_.embed_dim : 0;
  Matrix x(batch.rows(), shape_.input_width());
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    auto src = batch.dense.row(i);
    auto dst = x.row(i);
    std::copy_n(src.begin(), layout.head_width, dst.begin());
    if (e > 0) {
      auto ids = std::span(batch.ids).subspan(i * layout.k, layout.k);
      auto pooled = embed_mean_pool(ids, params_[embedding_]);
      std::copy(pooled.begin(), pooled.end(), dst.begin() + static_cast<std::ptrdiff_t>(layout.head_width));
    }
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(layout.head_width), src.end(),
              dst.begin() + static_cast<std::ptrdiff_t>(layout.head_width + e));
  }
  return x;
}

Matrix PredictorModel::predict(const Batch& batch) const {
  check_batch(batch);
  Matrix h = assemble_input(batch);
  for (const auto& slot : layers_) {
    Matrix z = linear(h, params_[slot.weight], params_[slot.bias]);
    const auto& scale = params_[slot.scale].values;
    const auto& shift = params_[slot.shift].values;
    const auto& mean = buffers_[slot.running_mean].values;
    const auto& var = buffers_[slot.running_var].values;
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto r = z.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) {
        const double y = scale[j] * (r[j] - mean[j]) / std::sqrt(var[j] + bn_.epsilon) + shift[j];
        r[j] = y > 0.0 ? y : 0.0;
      }
    }
    h = std::move(z);
  }
  return sigmoid_rows(linear(h, params_[out_weight_], params_[out_bias_]));
}

Matrix PredictorModel::forward(const Batch& batch, ForwardCache* cache) {
  if (mode_ == Mode::eval) {
    if (cache) cache->valid = false;
    return predict(batch);
  }
  check_batch(batch);
  const std::size_t b = batch.rows();
  if (b < 2) throw Error(ErrorCode::invalid_argument, "train-mode forward needs a batch of at least 2");
  const double inv_b = 1.0 / static_cast<double>(b);

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.layers.clear();
  c.layers.reserve(layers_.size());
  c.input = assemble_input(batch);
  c.ids = batch.ids;

  const Matrix* h = &c.input;
  for (const auto& slot : layers_) {
    ForwardCache::Layer layer;
    layer.input = *h;
    Matrix z = linear(*h, params_[slot.weight], params_[slot.bias]);
    const std::size_t width = z.cols();
    std::vector<double> mean(width, 0.0);
    std::vector<double> var(width, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      auto r = z.row(i);
      for (std::size_t j = 0; j < width; ++j) mean[j] += r[j];
    }
    for (auto& m : mean) m *= inv_b;
    for (std::size_t i = 0; i < b; ++i) {
      auto r = z.row(i);
      for (std::size_t j = 0; j < width; ++j) {
        const double d = r[j] - mean[j];
        var[j] += d * d;
      }
    }
    for (auto& v : var) v *= inv_b;

    layer.inv_std.resize(width);
    for (std::size_t j = 0; j < width; ++j) layer.inv_std[j] = 1.0 / std::sqrt(var[j] + bn_.epsilon);

    const auto& scale = params_[slot.scale].values;
    const auto& shift = params_[slot.shift].values;
    layer.normalized = Matrix(b, width);
    layer.activation = Matrix(b, width);
    for (std::size_t i = 0; i < b; ++i) {
      auto zr = z.row(i);
      auto nr = layer.normalized.row(i);
      auto ar = layer.activation.row(i);
      for (std::size_t j = 0; j < width; ++j) {
        nr[j] = (zr[j] - mean[j]) * layer.inv_std[j];
        const double y = scale[j] * nr[j] + shift[j];
        ar[j] = y > 0.0 ? y : 0.0;
      }
    }

    auto& rm = buffers_[slot.running_mean].values;
    auto& rv = buffers_[slot.running_var].values;
    const double m = bn_.momentum;
    const double unbias = static_cast<double>(b) / static_cast<double>(b - 1);
    for (std::size_t j = 0; j < width; ++j) {
      rm[j] = (1.0 - m) * rm[j] + m * mean[j];
      rv[j] = (1.0 - m) * rv[j] + m * var[j] * unbias;
    }
    c.layers.push_back(std::move(layer));
    h = &c.layers.back().activation;
  }
  c.probs = sigmoid_rows(linear(*h, params_[out_weight_], params_[out_bias_]));
  c.valid = true;
  return c.probs;
}

GradientSet PredictorModel::backward(const ForwardCache& cache, const Matrix& grad_logits) const {
  if (!cache.valid) throw Error(ErrorCode::state, "backward called without a train-mode forward cache");
  const std::size_t b = cache.input.rows();
  if (grad_logits.rows() != b || grad_logits.cols() != shape_.n_labels) {
    throw Error(ErrorCode::invalid_argument, "loss gradient shape does not match the forward batch");
  }
  GradientSet g = zero_gradients();

  const Matrix& last = cache.layers.empty() ? cache.input : cache.layers.back().activation;
  linear_backward_weights(last, grad_logits, g[out_weight_], g[out_bias_]);

  const bool need_input_grad = embedding_ != npos;
  if (layers_.empty() && !need_input_grad) return g;
  Matrix grad = linear_backward_input(grad_logits, params_[out_weight_]);

  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& slot = layers_[l];
    const auto& layer = cache.layers[l];
    const std::size_t width = grad.cols();
    const auto& scale = params_[slot.scale].values;
    auto& g_scale = g[slot.scale];
    auto& g_shift = g[slot.shift];

    // grad currently holds dL/d(activation); turn it into dL/d(normalized).
    std::vector<double> sum_dn(width, 0.0);
    std::vector<double> sum_dn_n(width, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      auto gr = grad.row(i);
      auto ar = layer.activation.row(i);
      auto nr = layer.normalized.row(i);
      for (std::size_t j = 0; j < width; ++j) {
        const double dy = ar[j] > 0.0 ? gr[j] : 0.0;
        g_scale[j] += dy * nr[j];
        g_shift[j] += dy;
        const double dn = dy * scale[j];
        gr[j] = dn;
        sum_dn[j] += dn;
        sum_dn_n[j] += dn * nr[j];
      }
    }
    for (std::size_t i = 0; i < b; ++i) {
      auto gr = grad.row(i);
      auto nr = layer.normalized.row(i);
      for (std::size_t j = 0; j < width; ++j) {
        gr[j] = layer.inv_std[j] * inv_b *
                (static_cast<double>(b) * gr[j] - sum_dn[j] - nr[j] * sum_dn_n[j]);
      }
    }
    linear_backward_weights(layer.input, grad, g[slot.weight], g[slot.bias]);
    if (l > 0 || need_input_grad) grad = linear_backward_input(grad, params_[slot.weight]);
  }

  if (need_input_grad) {
    const auto& layout = shape_.input;
    const auto& table = params_[embedding_];
    auto& g_table = g[embedding_];
    for (std::size_t i = 0; i < b; ++i) {
      auto pooled_grad = grad.row(i).subspan(layout.head_width, shape_.embed_dim);
      auto ids = std::span(cache.ids).subspan(i * layout.k, layout.k);
      embed_mean_pool_backward(ids, pooled_grad, table, g_table);
    }
    std::fill_n(g_table.begin(), table.cols, 0.0);
  }
  return g;
}

}  // namespace nextmin
