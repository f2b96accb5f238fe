#pragma once

#include <algorithm>
#include <span>
#include <thread>
#include <vector>

#include "fcr/nn/model.hpp"
#include "fcr/nn/sample_set.hpp"

namespace fcr::nn {

/// Inputs to the final Dense layer for every sample of a set. Edits to the
/// head leave these unchanged, so edited models can be scored on them
/// directly.
struct FeatureMatrix {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t n) const { return {values.data() + n * dim, dim}; }
};

/// Runs `body(begin, end)` over [0, count) split into `threads` contiguous
/// shards. Output must not depend on the shard layout.
template <typename Body>
void parallel_ranges(std::size_t count, std::size_t threads, Body body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    body(std::size_t{0}, count);
    return;
  }
  std::vector<std::jthread> workers;
  const std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk, end = std::min(count, begin + chunk);
    if (begin < end) workers.emplace_back([=] { body(begin, end); });
  }
}

inline FeatureMatrix extract_features(const Model& model, const SampleSet& set, std::size_t threads = 1) {
  if (set.shape != model.input_shape()) throw Error(ErrorKind::InputShape, "dataset shape does not match model");
  FeatureMatrix out{set.size(), model.feature_dim(), std::vector<double>(set.size() * model.feature_dim())};
  parallel_ranges(set.size(), threads, [&](std::size_t begin, std::size_t end) {
    Activations acts(model);
    for (std::size_t n = begin; n < end; ++n) {
      set.load(n, acts.values[0].data());
      forward_sample(model, acts, 0, model.final_layer());
      const auto f = acts.values[model.final_layer()];
      std::copy(f.begin(), f.end(), out.values.begin() + static_cast<std::ptrdiff_t>(n * out.dim));
    }
  });
  return out;
}

/// Logits of one feature row under a head (weight [K, P], bias [K]).
inline void head_logits(const Tensor& weight, const Tensor& bias, std::span<const double> feature,
                        std::span<double> logits) {
  ops::dense_forward(Dense{weight.shape[1], weight.shape[0]}, weight.data(), bias.data(), feature.data(),
                     logits.data());
}

inline std::vector<int> predict_head(const Tensor& weight, const Tensor& bias, const FeatureMatrix& features) {
  std::vector<int> out(features.count);
  std::vector<double> logits(weight.shape[0]);
  for (std::size_t n = 0; n < features.count; ++n) {
    head_logits(weight, bias, features.row(n), logits);
    out[n] = static_cast<int>(argmax(logits));
  }
  return out;
}

inline std::vector<int> predict(const Model& model, const SampleSet& set, std::size_t threads = 1) {
  if (set.shape != model.input_shape()) throw Error(ErrorKind::InputShape, "dataset shape does not match model");
  std::vector<int> out(set.size());
  parallel_ranges(set.size(), threads, [&](std::size_t begin, std::size_t end) {
    Activations acts(model);
    for (std::size_t n = begin; n < end; ++n) {
      set.load(n, acts.values[0].data());
      forward_sample(model, acts);
      out[n] = static_cast<int>(argmax(acts.logits()));
    }
  });
  return out;
}

}  // namespace fcr::nn
