#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fcr/core/error.hpp"
#include "fcr/nn/layers.hpp"

namespace fcr::data {

/// An unsigned-byte IDX tensor: big-endian u32 dims followed by the payload.
struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

/// Images (N x C x H x W, u8) with one integer label each.
struct ImageSet {
  nn::ImageShape shape;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

inline IdxTensor parse_idx(std::istream& in, const std::string& what) {
  unsigned char header[4];
  if (!in.read(reinterpret_cast<char*>(header), 4)) throw Error(ErrorKind::Truncation, what + ": missing IDX header");
  if (header[0] != 0 || header[1] != 0 || header[2] != 0x08 || header[3] == 0) {
    throw Error(ErrorKind::Format, what + ": bad IDX magic (expected 00 00 08 <ndim>)");
  }
  IdxTensor tensor;
  for (int d = 0; d < header[3]; ++d) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(ErrorKind::Truncation, what + ": truncated IDX dims");
    tensor.dims.push_back((std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
                          std::uint32_t{b[3]});
  }
  tensor.bytes.resize(tensor.element_count());
  in.read(reinterpret_cast<char*>(tensor.bytes.data()), static_cast<std::streamsize>(tensor.bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != tensor.bytes.size()) {
    throw Error(ErrorKind::Truncation, what + ": expected " + std::to_string(tensor.bytes.size()) +
                                           " payload bytes, got " + std::to_string(in.gcount()));
  }
  return tensor;
}

inline IdxTensor load_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingInput, "cannot open IDX file " + path.string());
  return parse_idx(in, path.string());
}

/// Pairs an idx3 image tensor with an idx1 label tensor.
inline ImageSet pair_images(const IdxTensor& images, const IdxTensor& labels) {
  if (images.dims.size() != 3 || labels.dims.size() != 1) {
    throw Error(ErrorKind::Format, "expected idx3 images and idx1 labels");
  }
  if (images.dims[0] != labels.dims[0]) {
    throw Error(ErrorKind::Pairing, std::to_string(images.dims[0]) + " images but " + std::to_string(labels.dims[0]) +
                                        " labels");
  }
  ImageSet set;
  set.shape = {1, images.dims[1], images.dims[2]};
  set.pixels = images.bytes;
  set.labels.assign(labels.bytes.begin(), labels.bytes.end());
  return set;
}

/// Loads the standard MNIST file pair for "train" or "t10k" from `dir`.
inline ImageSet load_mnist(const std::filesystem::path& dir, const std::string& prefix) {
  return pair_images(load_idx(dir / (prefix + "-images-idx3-ubyte")), load_idx(dir / (prefix + "-labels-idx1-ubyte")));
}

/// CIFAR-10 binary batch: rows of 1 label byte + 3072 channel-major pixels.
inline ImageSet load_cifar10(const std::filesystem::path& path) {
  constexpr std::size_t kRow = 1 + 3 * 32 * 32;
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorKind::MissingInput, "cannot open CIFAR-10 batch " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % kRow != 0) {
    throw Error(ErrorKind::Truncation, path.string() + ": size " + std::to_string(bytes) + " is not a multiple of " +
                                           std::to_string(kRow));
  }
  in.seekg(0);
  std::vector<std::uint8_t> raw(bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  ImageSet set;
  set.shape = {3, 32, 32};
  const std::size_t rows = bytes / kRow;
  set.pixels.reserve(rows * (kRow - 1));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::uint8_t label = raw[r * kRow];
    if (label > 9) throw Error(ErrorKind::Format, path.string() + ": label " + std::to_string(label) + " > 9");
    set.labels.push_back(label);
    set.pixels.insert(set.pixels.end(), raw.begin() + static_cast<std::ptrdiff_t>(r * kRow + 1),
                      raw.begin() + static_cast<std::ptrdiff_t>((r + 1) * kRow));
  }
  return set;
}

}  // namespace fcr::data
