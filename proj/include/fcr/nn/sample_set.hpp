#pragma once

#include <cstdint>
#include <span>

#include "fcr/core/error.hpp"
#include "fcr/nn/layers.hpp"
#include "fcr/nn/model.hpp"

namespace fcr::nn {

/// Non-owning view of labelled inputs: either u8 pixels (scaled by 1/255 on
/// load) or raw doubles. Exactly one of the two spans is non-empty.
struct SampleSet {
  ImageShape shape;
  std::span<const std::uint8_t> pixels;
  std::span<const double> reals;
  std::span<const int> labels;

  std::size_t size() const { return labels.size(); }

  void load(std::size_t n, double* out) const {
    const std::size_t width = shape.size();
    if (!pixels.empty()) {
      const std::uint8_t* src = pixels.data() + n * width;
      for (std::size_t k = 0; k < width; ++k) out[k] = static_cast<double>(src[k]) / 255.0;
    } else {
      const double* src = reals.data() + n * width;
      std::copy(src, src + width, out);
    }
  }

  void validate() const {
    const std::size_t expected = labels.size() * shape.size();
    if ((pixels.empty() == reals.empty()) || (pixels.size() + reals.size()) != expected) {
      throw Error(ErrorKind::Pairing, "sample data does not match label count");
    }
  }
};

/// Copies the listed samples into a dense batch.
inline Batch make_batch(const SampleSet& set, std::span<const std::size_t> indices) {
  Batch batch{set.shape, indices.size(), std::vector<double>(indices.size() * set.shape.size())};
  for (std::size_t n = 0; n < indices.size(); ++n) set.load(indices[n], batch.values.data() + n * set.shape.size());
  return batch;
}

inline Batch make_batch(const SampleSet& set) {
  Batch batch{set.shape, set.size(), std::vector<double>(set.size() * set.shape.size())};
  for (std::size_t n = 0; n < set.size(); ++n) set.load(n, batch.values.data() + n * set.shape.size());
  return batch;
}

}  // namespace fcr::nn
