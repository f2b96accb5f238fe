#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "fcr/nn/layers.hpp"

// Per-sample kernels. Inputs/outputs are double; weights are float32 and are
// widened on load. Loop order keeps the innermost loop contiguous in x.

namespace fcr::nn::ops {

inline ImageShape conv_output_shape(const ImageShape& in, const Conv2d& conv) {
  return {conv.out_channels, (in.height - conv.kernel) / conv.stride + 1,
          (in.width - conv.kernel) / conv.stride + 1};
}

inline ImageShape pool_output_shape(const ImageShape& in, const MaxPool& pool) {
  return {in.channels, in.height / pool.k, in.width / pool.k};
}

inline void conv_forward(const ImageShape& in_shape, const Conv2d& conv, const float* weight, const float* bias,
                         const double* in, double* out) {
  const ImageShape os = conv_output_shape(in_shape, conv);
  const std::size_t k = conv.kernel, s = conv.stride;
  const std::size_t plane_in = in_shape.height * in_shape.width;
  const std::size_t plane_out = os.height * os.width;
  for (std::size_t o = 0; o < os.channels; ++o) {
    double* dst = out + o * plane_out;
    std::fill(dst, dst + plane_out, static_cast<double>(bias[o]));
    for (std::size_t c = 0; c < in_shape.channels; ++c) {
      const double* src = in + c * plane_in;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double w = weight[((o * in_shape.channels + c) * k + ky) * k + kx];
          for (std::size_t y = 0; y < os.height; ++y) {
            const double* row = src + (y * s + ky) * in_shape.width + kx;
            double* orow = dst + y * os.width;
            if (s == 1) {
              for (std::size_t x = 0; x < os.width; ++x) orow[x] += w * row[x];
            } else {
              for (std::size_t x = 0; x < os.width; ++x) orow[x] += w * row[x * s];
            }
          }
        }
      }
    }
  }
}

/// Accumulates dW, db and (when d_in is non-null) writes d_in.
inline void conv_backward(const ImageShape& in_shape, const Conv2d& conv, const float* weight, const double* in,
                          const double* d_out, double* d_weight, double* d_bias, double* d_in, double scale) {
  const ImageShape os = conv_output_shape(in_shape, conv);
  const std::size_t k = conv.kernel, s = conv.stride;
  const std::size_t plane_in = in_shape.height * in_shape.width;
  const std::size_t plane_out = os.height * os.width;
  if (d_in) std::fill(d_in, d_in + in_shape.size(), 0.0);
  for (std::size_t o = 0; o < os.channels; ++o) {
    const double* g = d_out + o * plane_out;
    double gsum = 0.0;
    for (std::size_t p = 0; p < plane_out; ++p) gsum += g[p];
    d_bias[o] += scale * gsum;
    for (std::size_t c = 0; c < in_shape.channels; ++c) {
      const double* src = in + c * plane_in;
      double* dsrc = d_in ? d_in + c * plane_in : nullptr;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::size_t widx = ((o * in_shape.channels + c) * k + ky) * k + kx;
          const double w = weight[widx];
          double acc = 0.0;
          for (std::size_t y = 0; y < os.height; ++y) {
            const std::size_t base = (y * s + ky) * in_shape.width + kx;
            const double* grow = g + y * os.width;
            for (std::size_t x = 0; x < os.width; ++x) acc += grow[x] * src[base + x * s];
            if (dsrc) {
              for (std::size_t x = 0; x < os.width; ++x) dsrc[base + x * s] += w * grow[x];
            }
          }
          d_weight[widx] += scale * acc;
        }
      }
    }
  }
}

inline void relu_forward(std::size_t n, const double* in, double* out) {
  for (std::size_t k = 0; k < n; ++k) out[k] = in[k] > 0.0 ? in[k] : 0.0;
}

inline void relu_backward(std::size_t n, const double* out, const double* d_out, double* d_in) {
  for (std::size_t k = 0; k < n; ++k) d_in[k] = out[k] > 0.0 ? d_out[k] : 0.0;
}

inline void maxpool_forward(const ImageShape& in_shape, const MaxPool& pool, const double* in, double* out) {
  const ImageShape os = pool_output_shape(in_shape, pool);
  for (std::size_t c = 0; c < os.channels; ++c) {
    const double* src = in + c * in_shape.height * in_shape.width;
    for (std::size_t y = 0; y < os.height; ++y) {
      for (std::size_t x = 0; x < os.width; ++x) {
        double best = src[(y * pool.k) * in_shape.width + x * pool.k];
        for (std::size_t dy = 0; dy < pool.k; ++dy)
          for (std::size_t dx = 0; dx < pool.k; ++dx)
            best = std::max(best, src[(y * pool.k + dy) * in_shape.width + x * pool.k + dx]);
        out[(c * os.height + y) * os.width + x] = best;
      }
    }
  }
}

/// Routes each output gradient to the first maximal input of its window.
inline void maxpool_backward(const ImageShape& in_shape, const MaxPool& pool, const double* in, const double* d_out,
                             double* d_in) {
  const ImageShape os = pool_output_shape(in_shape, pool);
  std::fill(d_in, d_in + in_shape.size(), 0.0);
  for (std::size_t c = 0; c < os.channels; ++c) {
    const std::size_t plane = c * in_shape.height * in_shape.width;
    for (std::size_t y = 0; y < os.height; ++y) {
      for (std::size_t x = 0; x < os.width; ++x) {
        std::size_t arg = plane + (y * pool.k) * in_shape.width + x * pool.k;
        for (std::size_t dy = 0; dy < pool.k; ++dy) {
          for (std::size_t dx = 0; dx < pool.k; ++dx) {
            const std::size_t idx = plane + (y * pool.k + dy) * in_shape.width + x * pool.k + dx;
            if (in[idx] > in[arg]) arg = idx;
          }
        }
        d_in[arg] += d_out[(c * os.height + y) * os.width + x];
      }
    }
  }
}

inline void dense_forward(const Dense& dense, const float* weight, const float* bias, const double* in, double* out) {
  for (std::size_t j = 0; j < dense.out; ++j) {
    const float* row = weight + j * dense.in;
    double acc = bias[j];
    for (std::size_t i = 0; i < dense.in; ++i) acc += static_cast<double>(row[i]) * in[i];
    out[j] = acc;
  }
}

inline void dense_backward(const Dense& dense, const float* weight, const double* in, const double* d_out,
                           double* d_weight, double* d_bias, double* d_in, double scale) {
  for (std::size_t j = 0; j < dense.out; ++j) {
    const double g = d_out[j];
    d_bias[j] += scale * g;
    double* drow = d_weight + j * dense.in;
    const double sg = scale * g;
    for (std::size_t i = 0; i < dense.in; ++i) drow[i] += sg * in[i];
  }
  if (d_in) {
    std::fill(d_in, d_in + dense.in, 0.0);
    for (std::size_t j = 0; j < dense.out; ++j) {
      const float* row = weight + j * dense.in;
      const double g = d_out[j];
      for (std::size_t i = 0; i < dense.in; ++i) d_in[i] += static_cast<double>(row[i]) * g;
    }
  }
}

/// Numerically stable softmax; returns log-sum-exp.
inline double softmax(std::span<const double> logits, std::span<double> probs) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - peak);
    sum += probs[k];
  }
  for (double& p : probs) p /= sum;
  return peak + std::log(sum);
}

}  // namespace fcr::nn::ops
