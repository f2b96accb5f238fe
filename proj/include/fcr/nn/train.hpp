#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "fcr/nn/backward.hpp"
#include "fcr/nn/sample_set.hpp"

namespace fcr::nn {

enum class Optimizer { Sgd, Adam };

inline std::string to_string(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adam"; }
inline Optimizer optimizer_from_string(const std::string& name) {
  if (name == "sgd") return Optimizer::Sgd;
  if (name == "adam") return Optimizer::Adam;
  throw Error(ErrorKind::Usage, "unknown optimizer '" + name + "'");
}

struct TrainConfig {
  std::size_t epochs = 1;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  Optimizer optimizer = Optimizer::Adam;
  std::uint64_t seed = 0;
  std::vector<std::string> freeze;  // parameter tensor names held fixed
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean over the epoch, measured before each update
  double accuracy = 0.0;  // same convention
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

/// Thrown on a non-finite loss; carries the parameters from before the
/// offending update.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, Model last_finite)
      : Error(ErrorKind::Divergence, message), last_finite_(std::move(last_finite)) {}
  const Model& last_finite() const { return last_finite_; }

 private:
  Model last_finite_;
};

/// Names of every tensor except the final layer's (the Alg-2 style head
/// fine-tuning mask).
inline std::vector<std::string> backbone_tensor_names(const Model& model) {
  std::vector<std::string> names;
  for (const auto& name : model.tensor_names()) {
    if (name.rfind("L" + std::to_string(model.final_layer()) + ".", 0) != 0) names.push_back(name);
  }
  return names;
}

namespace detail {

// Inputs to the first trainable layer are cached when the frozen prefix is
// deterministic and the cache stays under this many doubles.
inline constexpr std::size_t kPrefixCacheLimit = std::size_t{1} << 25;

}  // namespace detail

/// Mini-batch training with softmax cross-entropy. Single-threaded; the
/// result is a pure function of (model, data, config).
inline TrainHistory train(Model& model, const SampleSet& data, const TrainConfig& config) {
  data.validate();
  if (data.size() == 0) throw Error(ErrorKind::EmptySplit, "training set is empty");
  if (data.shape != model.input_shape()) throw Error(ErrorKind::InputShape, "training data shape mismatch");
  if (config.batch_size == 0) throw Error(ErrorKind::Usage, "batch size must be positive");
  for (int label : data.labels) check_label(model, label);

  const auto names = model.tensor_names();
  std::set<std::string> frozen;
  for (const auto& name : config.freeze) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw Error(ErrorKind::OutOfRange, "freeze mask names unknown tensor '" + name + "'");
    }
    frozen.insert(name);
  }
  std::vector<bool> train_weight(model.layer_count(), false), train_bias(model.layer_count(), false);
  std::size_t first_trainable = model.layer_count();
  for (std::size_t k = 0; k < model.layer_count(); ++k) {
    if (!has_params(model.layers()[k])) continue;
    train_weight[k] = !frozen.count(Model::tensor_name(k, false));
    train_bias[k] = !frozen.count(Model::tensor_name(k, true));
    if ((train_weight[k] || train_bias[k]) && first_trainable == model.layer_count()) first_trainable = k;
  }

  TrainHistory history;
  if (first_trainable == model.layer_count()) {
    for (std::size_t e = 0; e < config.epochs; ++e) history.epochs.push_back({e, 0.0, 0.0});
    return history;
  }

  // Backprop only needs to reach the first trainable layer; when everything
  // below it is frozen its inputs are computed once and reused.
  const std::size_t cache_width = model.shape_before(first_trainable).size();
  std::vector<double> prefix_cache;
  Activations acts(model);
  if (first_trainable > 0 && data.size() * cache_width <= detail::kPrefixCacheLimit) {
    prefix_cache.resize(data.size() * cache_width);
    for (std::size_t n = 0; n < data.size(); ++n) {
      data.load(n, acts.values[0].data());
      forward_sample(model, acts, 0, first_trainable);
      std::copy(acts.values[first_trainable].begin(), acts.values[first_trainable].end(),
                prefix_cache.begin() + static_cast<std::ptrdiff_t>(n * cache_width));
    }
  }

  Gradients grads(model);
  Gradients moment1(model), moment2(model);
  Backprop backprop(model);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Pcg32 shuffler(config.seed, 0x7368756666ULL);
  std::size_t step = 0;

  bool finite = true;
  auto apply = [&config, &finite](std::vector<float>& param, const std::vector<double>& g, std::vector<double>& m,
                   std::vector<double>& v, double bias1, double bias2) {
    for (std::size_t n = 0; n < param.size(); ++n) {
      double update;
      if (config.optimizer == Optimizer::Sgd) {
        update = config.lr * g[n];
      } else {
        m[n] = config.beta1 * m[n] + (1.0 - config.beta1) * g[n];
        v[n] = config.beta2 * v[n] + (1.0 - config.beta2) * g[n] * g[n];
        update = config.lr * (m[n] / bias1) / (std::sqrt(v[n] / bias2) + config.epsilon);
      }
      param[n] = static_cast<float>(static_cast<double>(param[n]) - update);
      finite = finite && std::isfinite(param[n]);
    }
  };
  std::vector<std::vector<float>> backup;  // parameters before the current step

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffler.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      grads.zero();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t n = order[b];
        if (!prefix_cache.empty()) {
          const double* src = prefix_cache.data() + n * cache_width;
          std::copy(src, src + cache_width, acts.values[first_trainable].begin());
          forward_sample(model, acts, first_trainable);
        } else {
          data.load(n, acts.values[0].data());
          forward_sample(model, acts);
        }
        batch_loss += backprop.run(model, acts, data.labels[n], grads, first_trainable, scale);
        correct += argmax(acts.logits()) == static_cast<std::size_t>(data.labels[n]);
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", sample offset " +
                                  std::to_string(start),
                              model);
      }
      epoch_loss += batch_loss;
      ++step;
      const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      backup.clear();
      for (std::size_t k = first_trainable; k < model.layer_count(); ++k) {
        backup.push_back(model.params(k).weight.values);
        backup.push_back(model.params(k).bias.values);
      }
      for (std::size_t k = first_trainable; k < model.layer_count(); ++k) {
        if (train_weight[k]) apply(model.params(k).weight.values, grads.weight[k], moment1.weight[k], moment2.weight[k], bias1, bias2);
        if (train_bias[k]) apply(model.params(k).bias.values, grads.bias[k], moment1.bias[k], moment2.bias[k], bias1, bias2);
      }
      if (!finite) {
        for (std::size_t k = first_trainable, b = 0; k < model.layer_count(); ++k) {
          model.params(k).weight.values = std::move(backup[b++]);
          model.params(k).bias.values = std::move(backup[b++]);
        }
        throw DivergenceError("non-finite parameter after step " + std::to_string(step), model);
      }
    }
    history.epochs.push_back({epoch, epoch_loss / static_cast<double>(data.size()),
                              static_cast<double>(correct) / static_cast<double>(data.size())});
  }
  return history;
}

}  // namespace fcr::nn
