#pragma once

#include <cstddef>
#include <string>
#include <variant>

namespace fcr::nn {

/// Channel-major activation shape. Flat vectors use {n, 1, 1}.
struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Valid (unpadded) 2-D convolution with square kernel.
struct Conv2d {
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

struct Relu {
  friend bool operator==(const Relu&, const Relu&) = default;
};

/// Non-overlapping k x k max pooling; trailing rows/columns are dropped.
struct MaxPool {
  std::size_t k = 2;
  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

/// Fully connected layer. Weight is [out, in]; row j is the normal of the
/// decision hyperplane for output j.
struct Dense {
  std::size_t in = 1;
  std::size_t out = 1;
  friend bool operator==(const Dense&, const Dense&) = default;
};

using LayerSpec = std::variant<Conv2d, Relu, MaxPool, Flatten, Dense>;

inline std::string layer_kind(const LayerSpec& layer) {
  return std::visit(
      [](const auto& l) -> std::string {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Conv2d>) return "conv2d";
        else if constexpr (std::is_same_v<T, Relu>) return "relu";
        else if constexpr (std::is_same_v<T, MaxPool>) return "maxpool";
        else if constexpr (std::is_same_v<T, Flatten>) return "flatten";
        else return "dense";
      },
      layer);
}

inline bool has_params(const LayerSpec& layer) {
  return std::holds_alternative<Conv2d>(layer) || std::holds_alternative<Dense>(layer);
}

}  // namespace fcr::nn
