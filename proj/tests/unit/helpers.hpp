#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fcr/fcr.hpp"

namespace fcr::testing {

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() / "fcr-unit" /
             (std::string(info ? info->test_suite_name() : "x") + "." + (info ? info->name() : "y") + "." + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Dense-only head model: Flatten then Dense(in, K) on a {in,1,1} input.
inline nn::Model linear_model(std::size_t in, std::size_t classes, std::uint64_t seed = 1) {
  return nn::make_mlp({in, 1, 1}, {}, classes, seed);
}

inline nn::Batch random_batch(const nn::ImageShape& shape, std::size_t count, Pcg32& rng) {
  nn::Batch b{shape, count, std::vector<double>(shape.size() * count)};
  for (double& v : b.values) v = rng.uniform();
  return b;
}

/// Small 14x14 images whose class is encoded by which quadrant is bright, plus
/// noise. Two channels let the conv path see both.
inline data::GroupedDataset quadrant_dataset(std::size_t per_class, std::size_t classes, std::uint64_t seed,
                                             data::Split split = data::Split::Train) {
  data::GroupedDataset ds;
  ds.shape = {1, 14, 14};
  ds.num_classes = classes;
  ds.split = split;
  for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back(std::to_string(c));
  Pcg32 rng(seed, 99);
  for (std::size_t n = 0; n < per_class * classes; ++n) {
    const int y = static_cast<int>(n % classes);
    for (std::size_t r = 0; r < 14; ++r) {
      for (std::size_t col = 0; col < 14; ++col) {
        const std::size_t q = (r / 7) * 2 + col / 7;
        const bool bright = q == static_cast<std::size_t>(y) % 4;
        ds.pixels.push_back(static_cast<std::uint8_t>(bright ? 150 + rng.below(100) : rng.below(60)));
      }
    }
    ds.labels.push_back(y);
    ds.origin.push_back(n);
  }
  return ds;
}

inline std::string idx_header(std::initializer_list<std::uint32_t> dims) {
  std::string h{'\0', '\0', '\x08', static_cast<char>(dims.size())};
  for (auto d : dims) {
    h.push_back(static_cast<char>(d >> 24));
    h.push_back(static_cast<char>(d >> 16));
    h.push_back(static_cast<char>(d >> 8));
    h.push_back(static_cast<char>(d));
  }
  return h;
}

inline void write_idx(const std::filesystem::path& p, std::initializer_list<std::uint32_t> dims, const std::string& payload) {
  std::ofstream(p, std::ios::binary) << idx_header(dims) << payload;
}

/// MNIST-named IDX files under `dir`: digit d lights a vertical bar whose
/// position depends on d, plus noise.
inline void write_synthetic_mnist(const std::filesystem::path& dir, std::uint32_t train, std::uint32_t test,
                                  std::uint64_t seed = 1) {
  std::filesystem::create_directories(dir);
  Pcg32 rng(seed, 17);
  auto emit = [&](const std::string& prefix, std::uint32_t n) {
    std::string pixels, labels;
    for (std::uint32_t k = 0; k < n; ++k) {
      const int d = static_cast<int>(k % 10);
      labels.push_back(static_cast<char>(d));
      for (int r = 0; r < 28; ++r)
        for (int c = 0; c < 28; ++c) {
          const bool on = c >= 4 + 2 * d && c < 6 + 2 * d && r > 4 && r < 24;
          pixels.push_back(static_cast<char>(on ? 200 + rng.below(55) : rng.below(40)));
        }
    }
    write_idx(dir / (prefix + "-images-idx3-ubyte"), {n, 28, 28}, pixels);
    write_idx(dir / (prefix + "-labels-idx1-ubyte"), {n}, labels);
  };
  emit("train", train);
  emit("t10k", test);
}

}  // namespace fcr::testing
