#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace fcr {

/// Dense row-major float32 tensor. Parameters are stored at this precision;
/// arithmetic that depends on them is carried out in double.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, float fill = 0.0f)
      : shape(std::move(dims)), values(element_count(shape), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  std::size_t rank() const { return shape.size(); }

  float* data() { return values.data(); }
  const float* data() const { return values.data(); }

  /// Element (row, col) of a rank-2 tensor.
  float& at(std::size_t row, std::size_t col) { return values[row * shape[1] + col]; }
  float at(std::size_t row, std::size_t col) const { return values[row * shape[1] + col]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline std::string shape_string(const std::vector<std::size_t>& dims) {
  std::string out = "[";
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (k) out += ",";
    out += std::to_string(dims[k]);
  }
  return out + "]";
}

}  // namespace fcr
