#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fcr/nn/model.hpp"

namespace fcr::nn {

/// Gradient accumulators (64-bit) mirroring every parameter tensor.
struct Gradients {
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;

  explicit Gradients(const Model& model) {
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
      weight.emplace_back(model.params(k).weight.size(), 0.0);
      bias.emplace_back(model.params(k).bias.size(), 0.0);
    }
  }

  void zero() {
    for (auto& w : weight) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
  }
};

inline void check_label(const Model& model, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= model.num_classes()) {
    throw Error(ErrorKind::Label, "label " + std::to_string(label) + " outside [0, " +
                                      std::to_string(model.num_classes()) + ")");
  }
}

/// Softmax cross-entropy loss of one forwarded sample; back-propagates from the
/// logits down to `stop_layer` (inclusive) and adds scale * dL/dtheta into
/// `grads`. Layers below stop_layer are left untouched.
class Backprop {
 public:
  explicit Backprop(const Model& model) : probs_(model.num_classes()) {
    for (std::size_t k = 0; k <= model.layer_count(); ++k) deltas_.emplace_back(model.shape_before(k).size());
  }

  double run(const Model& model, const Activations& acts, int label, Gradients& grads, std::size_t stop_layer = 0,
             double scale = 1.0) {
    check_label(model, label);
    const auto logits = acts.logits();
    const double lse = ops::softmax(logits, probs_);
    const double loss = lse - logits[static_cast<std::size_t>(label)];
    auto& top = deltas_.back();
    for (std::size_t j = 0; j < probs_.size(); ++j) top[j] = probs_[j];
    top[static_cast<std::size_t>(label)] -= 1.0;

    for (std::size_t k = model.layer_count(); k-- > stop_layer;) {
      const double* in = acts.values[k].data();
      const double* out = acts.values[k + 1].data();
      const double* d_out = deltas_[k + 1].data();
      double* d_in = k > stop_layer ? deltas_[k].data() : nullptr;
      const ImageShape& in_shape = model.shape_before(k);
      const LayerParams& p = model.params(k);
      std::visit(
          [&](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Conv2d>) {
              ops::conv_backward(in_shape, l, p.weight.data(), in, d_out, grads.weight[k].data(),
                                 grads.bias[k].data(), d_in, scale);
            } else if constexpr (std::is_same_v<T, Dense>) {
              ops::dense_backward(l, p.weight.data(), in, d_out, grads.weight[k].data(), grads.bias[k].data(), d_in,
                                  scale);
            } else if (d_in) {
              if constexpr (std::is_same_v<T, Relu>) {
                ops::relu_backward(in_shape.size(), out, d_out, d_in);
              } else if constexpr (std::is_same_v<T, MaxPool>) {
                ops::maxpool_backward(in_shape, l, in, d_out, d_in);
              } else {
                std::copy(d_out, d_out + in_shape.size(), d_in);
              }
            }
          },
          model.layers()[k]);
    }
    return loss;
  }

  std::span<const double> probabilities() const { return probs_; }

 private:
  std::vector<double> probs_;
  std::vector<std::vector<double>> deltas_;
};

/// Per-sample gradients of the loss with respect to one layer's weights.
struct PerSampleGrads {
  std::size_t layer = 0;
  std::vector<std::size_t> shape;
  std::vector<std::vector<double>> samples;

  std::vector<double> mean() const {
    std::vector<double> out(samples.empty() ? 0 : samples.front().size(), 0.0);
    for (const auto& s : samples)
      for (std::size_t n = 0; n < s.size(); ++n) out[n] += s[n];
    for (double& v : out) v /= static_cast<double>(samples.size());
    return out;
  }
};

struct LossAndGrads {
  double loss = 0.0;  // batch mean
  PerSampleGrads grads;
};

inline LossAndGrads loss_and_backward(const Model& model, const Batch& batch, std::span<const int> labels,
                                      std::size_t layer) {
  check_batch(model, batch);
  if (labels.size() != batch.count) throw Error(ErrorKind::Pairing, "labels do not match batch size");
  if (layer >= model.layer_count() || !has_params(model.layers()[layer])) {
    throw Error(ErrorKind::OutOfRange, "layer " + std::to_string(layer) + " has no weights");
  }
  LossAndGrads result;
  result.grads.layer = layer;
  result.grads.shape = model.params(layer).weight.shape;
  Activations acts(model);
  Backprop backprop(model);
  Gradients grads(model);
  for (std::size_t n = 0; n < batch.count; ++n) {
    const auto x = batch.sample(n);
    std::copy(x.begin(), x.end(), acts.values[0].begin());
    forward_sample(model, acts);
    grads.weight[layer].assign(grads.weight[layer].size(), 0.0);
    result.loss += backprop.run(model, acts, labels[n], grads, layer);
    result.grads.samples.push_back(grads.weight[layer]);
  }
  if (batch.count) result.loss /= static_cast<double>(batch.count);
  return result;
}

/// Mean loss and mean gradient of every parameter over a batch.
inline std::pair<double, Gradients> batch_gradient(const Model& model, const Batch& batch,
                                                   std::span<const int> labels) {
  check_batch(model, batch);
  if (labels.size() != batch.count) throw Error(ErrorKind::Pairing, "labels do not match batch size");
  Gradients grads(model);
  Activations acts(model);
  Backprop backprop(model);
  double loss = 0.0;
  const double scale = 1.0 / static_cast<double>(batch.count);
  for (std::size_t n = 0; n < batch.count; ++n) {
    const auto x = batch.sample(n);
    std::copy(x.begin(), x.end(), acts.values[0].begin());
    forward_sample(model, acts);
    loss += backprop.run(model, acts, labels[n], grads, 0, scale);
  }
  return {loss * scale, std::move(grads)};
}

/// Mean softmax cross-entropy over a batch without gradients.
inline double batch_loss(const Model& model, const Batch& batch, std::span<const int> labels) {
  check_batch(model, batch);
  Activations acts(model);
  std::vector<double> probs(model.num_classes());
  double loss = 0.0;
  for (std::size_t n = 0; n < batch.count; ++n) {
    check_label(model, labels[n]);
    const auto x = batch.sample(n);
    std::copy(x.begin(), x.end(), acts.values[0].begin());
    forward_sample(model, acts);
    loss += ops::softmax(acts.logits(), probs) - acts.logits()[static_cast<std::size_t>(labels[n])];
  }
  return loss / static_cast<double>(batch.count);
}

}  // namespace fcr::nn
