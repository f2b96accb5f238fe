#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fcr/core/error.hpp"
#include "fcr/core/rng.hpp"
#include "fcr/core/tensor.hpp"
#include "fcr/nn/layers.hpp"
#include "fcr/nn/ops.hpp"

namespace fcr::nn {

struct ModelMeta {
  std::uint64_t seed = 0;
  std::string arch = "sequential";
  std::vector<std::string> class_names;
  nlohmann::json training = nlohmann::json::object();
};

struct LayerParams {
  Tensor weight;
  Tensor bias;
};

/// Layered feedforward classifier. The last layer must be Dense; its weight
/// rows are the per-class hyperplane normals that the editor operates on.
class Model {
 public:
  Model() = default;

  Model(ImageShape input, std::vector<LayerSpec> layers, ModelMeta meta = {})
      : input_(input), layers_(std::move(layers)), meta_(std::move(meta)) {
    if (layers_.empty()) throw Error(ErrorKind::InputShape, "model has no layers");
    if (!std::holds_alternative<Dense>(layers_.back())) {
      throw Error(ErrorKind::InputShape, "final layer must be dense");
    }
    shapes_.reserve(layers_.size() + 1);
    shapes_.push_back(input_);
    params_.resize(layers_.size());
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const ImageShape in = shapes_.back();
      shapes_.push_back(std::visit([&](const auto& l) { return infer(k, in, l); }, layers_[k]));
    }
  }

  const ImageShape& input_shape() const { return input_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  /// Shape entering layer k (k == layer_count() gives the logits shape).
  const ImageShape& shape_before(std::size_t k) const { return shapes_.at(k); }
  const ImageShape& shape_after(std::size_t k) const { return shapes_.at(k + 1); }

  LayerParams& params(std::size_t k) { return params_.at(k); }
  const LayerParams& params(std::size_t k) const { return params_.at(k); }

  std::size_t final_layer() const { return layers_.size() - 1; }
  const Dense& head() const { return std::get<Dense>(layers_.back()); }
  std::size_t num_classes() const { return head().out; }
  std::size_t feature_dim() const { return head().in; }

  Tensor& head_weight() { return params_.back().weight; }
  const Tensor& head_weight() const { return params_.back().weight; }

  ModelMeta& meta() { return meta_; }
  const ModelMeta& meta() const { return meta_; }

  /// "L<k>.weight" / "L<k>.bias" for every parameterised layer, in layer order.
  std::vector<std::string> tensor_names() const {
    std::vector<std::string> names;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      if (!has_params(layers_[k])) continue;
      names.push_back(tensor_name(k, false));
      names.push_back(tensor_name(k, true));
    }
    return names;
  }

  static std::string tensor_name(std::size_t layer, bool bias) {
    return "L" + std::to_string(layer) + (bias ? ".bias" : ".weight");
  }

  Tensor& tensor(const std::string& name) { return const_cast<Tensor&>(std::as_const(*this).tensor(name)); }
  const Tensor& tensor(const std::string& name) const {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      if (!has_params(layers_[k])) continue;
      if (name == tensor_name(k, false)) return params_[k].weight;
      if (name == tensor_name(k, true)) return params_[k].bias;
    }
    throw Error(ErrorKind::OutOfRange, "no parameter tensor named '" + name + "'");
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.weight.size() + p.bias.size();
    return n;
  }

  /// He-normal weights, zero biases, drawn layer by layer from one PCG32 stream.
  void initialize(std::uint64_t seed) {
    meta_.seed = seed;
    Pcg32 rng(seed);
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      if (!has_params(layers_[k])) continue;
      auto& p = params_[k];
      const std::size_t fan_in = p.weight.size() / p.bias.size();
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (float& w : p.weight.values) w = static_cast<float>(stddev * rng.normal());
      std::fill(p.bias.values.begin(), p.bias.values.end(), 0.0f);
    }
  }

 private:
  ImageShape infer(std::size_t k, const ImageShape& in, const Conv2d& conv) {
    if (conv.kernel == 0 || conv.stride == 0 || conv.out_channels == 0 || in.height < conv.kernel ||
        in.width < conv.kernel) {
      throw Error(ErrorKind::InputShape, "conv layer " + std::to_string(k) + " does not fit its input");
    }
    params_[k].weight = Tensor({conv.out_channels, in.channels, conv.kernel, conv.kernel});
    params_[k].bias = Tensor({conv.out_channels});
    return ops::conv_output_shape(in, conv);
  }
  ImageShape infer(std::size_t, const ImageShape& in, const Relu&) { return in; }
  ImageShape infer(std::size_t k, const ImageShape& in, const MaxPool& pool) {
    if (pool.k == 0 || in.height < pool.k || in.width < pool.k) {
      throw Error(ErrorKind::InputShape, "pool layer " + std::to_string(k) + " does not fit its input");
    }
    return ops::pool_output_shape(in, pool);
  }
  ImageShape infer(std::size_t, const ImageShape& in, const Flatten&) { return {in.size(), 1, 1}; }
  ImageShape infer(std::size_t k, const ImageShape& in, const Dense& dense) {
    if (dense.in != in.size() || dense.out == 0) {
      throw Error(ErrorKind::InputShape, "dense layer " + std::to_string(k) + " expects " + std::to_string(dense.in) +
                                             " inputs, got " + std::to_string(in.size()));
    }
    params_[k].weight = Tensor({dense.out, dense.in});
    params_[k].bias = Tensor({dense.out});
    return {dense.out, 1, 1};
  }

  ImageShape input_;
  std::vector<LayerSpec> layers_;
  std::vector<ImageShape> shapes_;
  std::vector<LayerParams> params_;
  ModelMeta meta_;
};

/// True when every parameter has the same bit pattern (so -0.0 != 0.0).
inline bool bit_identical(const Model& a, const Model& b) {
  if (a.layers() != b.layers() || a.input_shape() != b.input_shape()) return false;
  for (std::size_t k = 0; k < a.layer_count(); ++k) {
    const auto& pa = a.params(k);
    const auto& pb = b.params(k);
    if (pa.weight.shape != pb.weight.shape || pa.bias.shape != pb.bias.shape) return false;
    if (std::memcmp(pa.weight.data(), pb.weight.data(), pa.weight.size() * sizeof(float)) != 0) return false;
    if (std::memcmp(pa.bias.data(), pb.bias.data(), pa.bias.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

/// Number of scalar parameters whose bit patterns differ (the l0 edit distance).
inline std::size_t l0_distance(const Model& a, const Model& b) {
  if (a.layers() != b.layers()) throw Error(ErrorKind::InputShape, "l0 distance needs identical architectures");
  std::size_t diff = 0;
  auto count = [&diff](const Tensor& x, const Tensor& y) {
    for (std::size_t n = 0; n < x.size(); ++n) {
      diff += std::bit_cast<std::uint32_t>(x.values[n]) != std::bit_cast<std::uint32_t>(y.values[n]);
    }
  };
  for (std::size_t k = 0; k < a.layer_count(); ++k) {
    count(a.params(k).weight, b.params(k).weight);
    count(a.params(k).bias, b.params(k).bias);
  }
  return diff;
}

/// Conv(8,3x3)-ReLU-MaxPool2-Conv(16,3x3)-ReLU-MaxPool2-Flatten-Dense(penult)-ReLU-Dense(K).
inline Model make_conv2net(ImageShape input, std::size_t classes, std::uint64_t seed, std::size_t penultimate = 64) {
  std::vector<LayerSpec> layers{Conv2d{8, 3, 1}, Relu{}, MaxPool{2}, Conv2d{16, 3, 1}, Relu{}, MaxPool{2}, Flatten{}};
  ImageShape s = ops::pool_output_shape(ops::conv_output_shape(input, Conv2d{8, 3, 1}), MaxPool{2});
  s = ops::pool_output_shape(ops::conv_output_shape(s, Conv2d{16, 3, 1}), MaxPool{2});
  layers.push_back(Dense{s.size(), penultimate});
  layers.push_back(Relu{});
  layers.push_back(Dense{penultimate, classes});
  ModelMeta meta;
  meta.arch = "conv2net";
  Model model(input, std::move(layers), std::move(meta));
  model.initialize(seed);
  return model;
}

/// Flatten-(Dense-ReLU)*-Dense multilayer perceptron.
inline Model make_mlp(ImageShape input, const std::vector<std::size_t>& hidden, std::size_t classes,
                      std::uint64_t seed) {
  std::vector<LayerSpec> layers{Flatten{}};
  std::size_t width = input.size();
  for (std::size_t h : hidden) {
    layers.push_back(Dense{width, h});
    layers.push_back(Relu{});
    width = h;
  }
  layers.push_back(Dense{width, classes});
  ModelMeta meta;
  meta.arch = "mlp";
  Model model(input, std::move(layers), std::move(meta));
  model.initialize(seed);
  return model;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// Per-sample workspace: values[0] is the input, values[k + 1] the output of layer k.
struct Activations {
  std::vector<std::vector<double>> values;

  explicit Activations(const Model& model) {
    values.reserve(model.layer_count() + 1);
    for (std::size_t k = 0; k <= model.layer_count(); ++k) values.emplace_back(model.shape_before(k).size());
  }
  std::span<const double> logits() const { return values.back(); }
  std::span<const double> features() const { return values[values.size() - 2]; }
};

/// Runs layers [from, to). values[from] must already hold that layer's input.
inline void forward_sample(const Model& model, Activations& acts, std::size_t from = 0,
                           std::size_t to = static_cast<std::size_t>(-1)) {
  to = std::min(to, model.layer_count());
  for (std::size_t k = from; k < to; ++k) {
    const double* in = acts.values[k].data();
    double* out = acts.values[k + 1].data();
    const ImageShape& in_shape = model.shape_before(k);
    const LayerParams& p = model.params(k);
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2d>) {
            ops::conv_forward(in_shape, l, p.weight.data(), p.bias.data(), in, out);
          } else if constexpr (std::is_same_v<T, Relu>) {
            ops::relu_forward(in_shape.size(), in, out);
          } else if constexpr (std::is_same_v<T, MaxPool>) {
            ops::maxpool_forward(in_shape, l, in, out);
          } else if constexpr (std::is_same_v<T, Flatten>) {
            std::copy(in, in + in_shape.size(), out);
          } else {
            ops::dense_forward(l, p.weight.data(), p.bias.data(), in, out);
          }
        },
        model.layers()[k]);
  }
}

/// A batch of real-valued inputs laid out sample-major.
struct Batch {
  ImageShape shape;
  std::size_t count = 0;
  std::vector<double> values;

  std::span<const double> sample(std::size_t n) const { return {values.data() + n * shape.size(), shape.size()}; }
  std::span<double> sample(std::size_t n) { return {values.data() + n * shape.size(), shape.size()}; }
};

/// Activations of every layer for a batch; read-only after creation.
class ForwardTrace {
 public:
  ForwardTrace(std::size_t count, std::vector<std::vector<double>> layers, std::size_t classes)
      : count_(count), layers_(std::move(layers)), classes_(classes) {}

  std::size_t batch_size() const { return count_; }
  std::size_t num_classes() const { return classes_; }
  std::size_t layer_count() const { return layers_.size(); }
  /// Output of layer k for sample n.
  std::span<const double> activation(std::size_t k, std::size_t n) const {
    const std::size_t width = layers_.at(k).size() / count_;
    return {layers_[k].data() + n * width, width};
  }
  std::span<const double> logits(std::size_t n) const { return activation(layers_.size() - 1, n); }

 private:
  std::size_t count_;
  std::vector<std::vector<double>> layers_;
  std::size_t classes_;
};

inline void check_batch(const Model& model, const Batch& batch) {
  if (batch.shape != model.input_shape() || batch.values.size() != batch.count * batch.shape.size()) {
    const auto& s = model.input_shape();
    throw Error(ErrorKind::InputShape, "batch shape does not match model input " + std::to_string(s.channels) + "x" +
                                           std::to_string(s.height) + "x" + std::to_string(s.width));
  }
}

inline ForwardTrace forward(const Model& model, const Batch& batch) {
  check_batch(model, batch);
  std::vector<std::vector<double>> layers(model.layer_count());
  for (std::size_t k = 0; k < model.layer_count(); ++k) layers[k].resize(batch.count * model.shape_after(k).size());
  Activations acts(model);
  for (std::size_t n = 0; n < batch.count; ++n) {
    const auto x = batch.sample(n);
    std::copy(x.begin(), x.end(), acts.values[0].begin());
    forward_sample(model, acts);
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
      const auto& v = acts.values[k + 1];
      std::copy(v.begin(), v.end(), layers[k].begin() + static_cast<std::ptrdiff_t>(n * v.size()));
    }
  }
  return ForwardTrace(batch.count, std::move(layers), model.num_classes());
}

inline std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace fcr::nn
