#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fcr/core/exact_sum.hpp"
#include "fcr/nn/features.hpp"

namespace fcr::attribution {

/// Which node's activation is credited to edge (j, i) of the final layer.
/// Source: the penultimate activation a_i entering the edge (default).
/// Destination: the softmax output p_j the edge feeds.
enum class ActivationMode { Source, Destination };

inline std::string to_string(ActivationMode m) { return m == ActivationMode::Source ? "source" : "destination"; }
inline ActivationMode activation_mode_from_string(const std::string& s) {
  if (s == "source") return ActivationMode::Source;
  if (s == "destination") return ActivationMode::Destination;
  throw Error(ErrorKind::Usage, "unknown activation mode '" + s + "'");
}

struct Edge {
  std::size_t j = 0;  // output (class) node
  std::size_t i = 0;  // input (feature) node
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Per-edge, per-class sums over the samples of each class:
///   A[e][c]  accumulated activation,
///   G[e][c]  accumulated |dL/dw_e|,
///   F[e][c]  accumulated (dL/dw_e)^2 (Fisher-diagonal baseline).
struct ClassAccumulators {
  std::size_t layer = 0;
  std::size_t out_dim = 0;  // rows of the head (j)
  std::size_t in_dim = 0;   // feature width (i)
  std::size_t num_classes = 0;
  ActivationMode mode = ActivationMode::Source;
  std::vector<double> A, G, F;
  std::vector<std::size_t> counts;
  std::vector<std::string> warnings;

  std::size_t edge_count() const { return out_dim * in_dim; }
  std::size_t offset(std::size_t j, std::size_t i, std::size_t c) const { return ((j * in_dim + i) * num_classes) + c; }
  double a(std::size_t j, std::size_t i, std::size_t c) const { return A[offset(j, i, c)]; }
  double g(std::size_t j, std::size_t i, std::size_t c) const { return G[offset(j, i, c)]; }
  double fisher(std::size_t j, std::size_t i, std::size_t c) const { return F[offset(j, i, c)]; }
  std::span<const double> a_row(std::size_t j, std::size_t i) const { return {A.data() + offset(j, i, 0), num_classes}; }
  std::span<const double> g_row(std::size_t j, std::size_t i) const { return {G.data() + offset(j, i, 0), num_classes}; }
};

struct AccumulateOptions {
  ActivationMode mode = ActivationMode::Source;
};

/// Accumulates over precomputed final-layer inputs. `labels` must lie in
/// [0, K) of the given head.
inline ClassAccumulators accumulate(const Tensor& head_weight, const Tensor& head_bias, std::size_t layer,
                                    const nn::FeatureMatrix& features, std::span<const int> labels,
                                    const AccumulateOptions& options = {}) {
  const std::size_t K = head_weight.shape[0], P = head_weight.shape[1];
  if (features.dim != P) throw Error(ErrorKind::InputShape, "feature width does not match head");
  if (labels.size() != features.count) throw Error(ErrorKind::Pairing, "labels do not match features");

  std::vector<ExactSum> A(K * P * K), G(K * P * K), F(K * P * K);
  ClassAccumulators acc;
  acc.layer = layer;
  acc.out_dim = K;
  acc.in_dim = P;
  acc.num_classes = K;
  acc.mode = options.mode;
  acc.counts.assign(K, 0);

  std::vector<double> logits(K), probs(K), delta(K);
  for (std::size_t n = 0; n < features.count; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= K) {
      throw Error(ErrorKind::Label, "label " + std::to_string(y) + " outside head range");
    }
    const auto c = static_cast<std::size_t>(y);
    const auto a = features.row(n);
    for (double v : a) {
      if (v < 0.0) throw Error(ErrorKind::Domain, "negative penultimate activation; final layer must follow a ReLU");
    }
    nn::head_logits(head_weight, head_bias, a, logits);
    nn::ops::softmax(logits, probs);
    for (std::size_t j = 0; j < K; ++j) delta[j] = probs[j] - (j == c ? 1.0 : 0.0);
    ++acc.counts[c];
    for (std::size_t j = 0; j < K; ++j) {
      for (std::size_t i = 0; i < P; ++i) {
        const std::size_t o = (j * P + i) * K + c;
        const double grad = delta[j] * a[i];
        G[o].add(std::fabs(grad));
        F[o].add(grad * grad);
        A[o].add(options.mode == ActivationMode::Source ? a[i] : probs[j]);
      }
    }
  }
  auto collapse = [](const std::vector<ExactSum>& sums) {
    std::vector<double> out(sums.size());
    for (std::size_t k = 0; k < sums.size(); ++k) out[k] = sums[k].value();
    return out;
  };
  acc.A = collapse(A);
  acc.G = collapse(G);
  acc.F = collapse(F);
  for (std::size_t c = 0; c < K; ++c) {
    if (acc.counts[c] == 0) acc.warnings.push_back("class " + std::to_string(c) + " has no samples; column is zero");
  }
  return acc;
}

/// Accumulates the final layer of `model` over a labelled sample set.
inline ClassAccumulators accumulate(const nn::Model& model, const nn::SampleSet& set,
                                    const AccumulateOptions& options = {}, std::size_t threads = 1) {
  const auto features = nn::extract_features(model, set, threads);
  return accumulate(model.head_weight(), model.params(model.final_layer()).bias, model.final_layer(), features,
                    set.labels, options);
}

}  // namespace fcr::attribution
