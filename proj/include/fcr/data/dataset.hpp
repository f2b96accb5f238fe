#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fcr/core/error.hpp"
#include "fcr/core/hash.hpp"
#include "fcr/core/rng.hpp"
#include "fcr/data/idx.hpp"
#include "fcr/nn/sample_set.hpp"

namespace fcr::data {

enum class Split { Train, Val, Test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

/// Labelled images with optional subclass and spurious-attribute labels.
/// Group id g = attribute * num_classes + label.
struct GroupedDataset {
  nn::ImageShape shape;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;
  std::vector<int> subclass;   // empty when absent
  std::vector<int> attribute;  // empty when absent
  std::vector<std::size_t> origin;  // position in the pooled source (train then test)
  std::size_t num_classes = 0;
  std::size_t num_subclasses = 0;
  std::size_t num_attribute_values = 0;
  std::vector<std::string> class_names;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }
  bool has_attribute() const { return !attribute.empty(); }
  bool has_subclass() const { return !subclass.empty(); }
  std::size_t num_groups() const { return has_attribute() ? num_attribute_values * num_classes : 0; }

  int group_id(std::size_t n) const {
    if (!has_attribute()) throw Error(ErrorKind::MissingAttribute, "dataset has no spurious-attribute labels");
    return attribute[n] * static_cast<int>(num_classes) + labels[n];
  }

  std::span<const std::uint8_t> image(std::size_t n) const { return {pixels.data() + n * shape.size(), shape.size()}; }

  nn::SampleSet view() const { return view(labels); }
  /// Same images under a different labelling (e.g. subclass or head-clone labels).
  nn::SampleSet view(std::span<const int> alt_labels) const {
    if (alt_labels.size() != size()) throw Error(ErrorKind::Pairing, "label vector does not match dataset");
    return nn::SampleSet{shape, pixels, {}, alt_labels};
  }

  GroupedDataset subset(std::span<const std::size_t> indices) const {
    GroupedDataset out;
    out.shape = shape;
    out.num_classes = num_classes;
    out.num_subclasses = num_subclasses;
    out.num_attribute_values = num_attribute_values;
    out.class_names = class_names;
    out.split = split;
    out.pixels.reserve(indices.size() * shape.size());
    for (std::size_t n : indices) {
      const auto img = image(n);
      out.pixels.insert(out.pixels.end(), img.begin(), img.end());
      out.labels.push_back(labels[n]);
      out.origin.push_back(origin[n]);
      if (has_subclass()) out.subclass.push_back(subclass[n]);
      if (has_attribute()) out.attribute.push_back(attribute[n]);
    }
    return out;
  }

  void validate() const {
    if (pixels.size() != size() * shape.size() || origin.size() != size()) {
      throw Error(ErrorKind::Pairing, "dataset arrays disagree in length");
    }
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
        throw Error(ErrorKind::Label, "class label " + std::to_string(y) + " outside [0, " +
                                          std::to_string(num_classes) + ")");
      }
    }
    if (has_attribute()) {
      if (attribute.size() != size()) throw Error(ErrorKind::Pairing, "attribute labels disagree in length");
      for (int a : attribute) {
        if (a < 0 || static_cast<std::size_t>(a) >= num_attribute_values) {
          throw Error(ErrorKind::Label, "attribute value " + std::to_string(a) + " out of range");
        }
      }
    }
    if (has_subclass() && subclass.size() != size()) {
      throw Error(ErrorKind::Pairing, "subclass labels disagree in length");
    }
  }
};

struct DatasetSplits {
  GroupedDataset train;
  GroupedDataset val;
  GroupedDataset test;
};

inline GroupedDataset from_image_set(const ImageSet& set, Split split, std::size_t num_classes,
                                     std::size_t origin_offset = 0) {
  GroupedDataset ds;
  ds.shape = set.shape;
  ds.pixels = set.pixels;
  ds.labels = set.labels;
  ds.origin.resize(set.size());
  std::iota(ds.origin.begin(), ds.origin.end(), origin_offset);
  ds.num_classes = num_classes;
  ds.split = split;
  for (std::size_t c = 0; c < num_classes; ++c) ds.class_names.push_back(std::to_string(c));
  ds.validate();
  return ds;
}

/// Deterministic train/val split of a train pool; val takes `val_count` samples.
inline std::pair<GroupedDataset, GroupedDataset> split_train_val(const GroupedDataset& pool, std::size_t val_count,
                                                                 std::uint64_t seed) {
  if (val_count > pool.size()) throw Error(ErrorKind::Domain, "validation split larger than pool");
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Pcg32 rng(seed, 0x73706c6974ULL);
  rng.shuffle(order);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val_count));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(val_count), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  auto train = pool.subset(train_idx);
  auto val = pool.subset(val_idx);
  train.split = Split::Train;
  val.split = Split::Val;
  return {std::move(train), std::move(val)};
}

/// Keeps the first `limit` samples (0 = all).
inline GroupedDataset head(const GroupedDataset& ds, std::size_t limit) {
  if (limit == 0 || limit >= ds.size()) return ds;
  std::vector<std::size_t> idx(limit);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return ds.subset(idx);
}

/// Reads MNIST from `dir`; val is carved out of the 60k training pool.
inline DatasetSplits load_mnist_splits(const std::filesystem::path& dir, std::size_t val_count, std::uint64_t seed) {
  const ImageSet train_pool = load_mnist(dir, "train");
  const ImageSet test_set = load_mnist(dir, "t10k");
  auto pool = from_image_set(train_pool, Split::Train, 10, 0);
  DatasetSplits splits;
  std::tie(splits.train, splits.val) = split_train_val(pool, val_count, seed);
  splits.test = from_image_set(test_set, Split::Test, 10, train_pool.size());
  return splits;
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// Digit d becomes class d mod 2 (even -> 0, odd -> 1); the digit is kept as
/// the subclass label.
inline GroupedDataset make_parity(const GroupedDataset& mnist) {
  GroupedDataset out = mnist;
  out.subclass = mnist.labels;
  out.num_subclasses = 10;
  for (int& y : out.labels) {
    if (y < 0 || y > 9) throw Error(ErrorKind::Label, "parity needs digit labels 0-9, got " + std::to_string(y));
    y %= 2;
  }
  out.num_classes = 2;
  out.class_names = {"even", "odd"};
  return out;
}

inline DatasetSplits make_parity(const DatasetSplits& mnist) {
  return {make_parity(mnist.train), make_parity(mnist.val), make_parity(mnist.test)};
}

enum class Corner { TopLeft, TopRight, BottomLeft, BottomRight };

inline std::string to_string(Corner c) {
  switch (c) {
    case Corner::TopLeft: return "top-left";
    case Corner::TopRight: return "top-right";
    case Corner::BottomLeft: return "bottom-left";
    case Corner::BottomRight: return "bottom-right";
  }
  return "top-left";
}

inline Corner corner_from_string(const std::string& name) {
  for (Corner c : {Corner::TopLeft, Corner::TopRight, Corner::BottomLeft, Corner::BottomRight}) {
    if (to_string(c) == name) return c;
  }
  throw Error(ErrorKind::Usage, "unknown corner '" + name + "'");
}

/// A solid square stamped into one image corner.
struct PatchSpec {
  std::size_t size = 4;
  Corner corner = Corner::TopLeft;
  std::uint8_t intensity = 255;
  double rho = 0.95;  // P(patch | designated class) on the train split
};

inline void stamp_patch(std::span<std::uint8_t> image, const nn::ImageShape& shape, const PatchSpec& spec) {
  const std::size_t y0 = (spec.corner == Corner::BottomLeft || spec.corner == Corner::BottomRight)
                             ? shape.height - spec.size
                             : 0;
  const std::size_t x0 =
      (spec.corner == Corner::TopRight || spec.corner == Corner::BottomRight) ? shape.width - spec.size : 0;
  for (std::size_t c = 0; c < shape.channels; ++c)
    for (std::size_t y = y0; y < y0 + spec.size; ++y)
      for (std::size_t x = x0; x < x0 + spec.size; ++x)
        image[(c * shape.height + y) * shape.width + x] = spec.intensity;
}

/// Adds the patch attribute (alpha = patch present). On the train split the
/// patch is drawn with probability rho for `designated` samples and 1 - rho
/// otherwise; on val/test it is drawn with probability 0.5 independent of
/// class.
inline GroupedDataset make_corner_patch(const GroupedDataset& base, const PatchSpec& spec, int designated,
                                        std::uint64_t seed) {
  if (!(spec.rho >= 0.0 && spec.rho <= 1.0)) {
    throw Error(ErrorKind::Domain, "patch correlation rho must lie in [0, 1]");
  }
  if (base.num_classes != 2) throw Error(ErrorKind::Domain, "corner patch needs a binary-label base dataset");
  if (designated < 0 || designated > 1) throw Error(ErrorKind::Label, "designated class must be 0 or 1");
  if (spec.size == 0 || spec.size > base.shape.height || spec.size > base.shape.width) {
    throw Error(ErrorKind::Domain, "patch does not fit inside the image");
  }
  GroupedDataset out = base;
  out.attribute.assign(out.size(), 0);
  out.num_attribute_values = 2;
  Pcg32 rng(seed, 0x7061746368ULL + static_cast<std::uint64_t>(base.split));
  for (std::size_t n = 0; n < out.size(); ++n) {
    const double p = base.split == Split::Train ? (out.labels[n] == designated ? spec.rho : 1.0 - spec.rho) : 0.5;
    if (rng.bernoulli(p)) {
      out.attribute[n] = 1;
      stamp_patch({out.pixels.data() + n * out.shape.size(), out.shape.size()}, out.shape, spec);
    }
  }
  return out;
}

inline DatasetSplits make_corner_patch(const DatasetSplits& base, const PatchSpec& spec, int designated,
                                       std::uint64_t seed) {
  return {make_corner_patch(base.train, spec, designated, seed), make_corner_patch(base.val, spec, designated, seed),
          make_corner_patch(base.test, spec, designated, seed)};
}

/// Group id -> sample indices for every (attribute, class) cell; cells with no
/// samples are present with an empty list.
inline std::map<int, std::vector<std::size_t>> group_partition(const GroupedDataset& ds) {
  if (!ds.has_attribute()) throw Error(ErrorKind::MissingAttribute, "group partition needs attribute labels");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t g = 0; g < ds.num_groups(); ++g) groups[static_cast<int>(g)];
  for (std::size_t n = 0; n < ds.size(); ++n) groups[ds.group_id(n)].push_back(n);
  return groups;
}

inline std::string group_name(const GroupedDataset& ds, int group) {
  const auto k = static_cast<int>(ds.num_classes);
  return "a" + std::to_string(group / k) + "_y" + std::to_string(group % k);
}

/// SHA-256 over images and every label vector.
inline std::string dataset_hash(const GroupedDataset& ds) {
  Sha256 h;
  h.update(ds.pixels);
  h.update_pod(std::span<const int>(ds.labels));
  h.update_pod(std::span<const int>(ds.subclass));
  h.update_pod(std::span<const int>(ds.attribute));
  return h.hex_digest();
}

/// Dataset manifest: what was built, from which seed, and the content hash.
inline nlohmann::json dataset_manifest(const GroupedDataset& ds, const nlohmann::json& spec) {
  nlohmann::json j;
  j["split"] = to_string(ds.split);
  j["size"] = ds.size();
  j["num_classes"] = ds.num_classes;
  j["shape"] = {ds.shape.channels, ds.shape.height, ds.shape.width};
  j["has_subclass"] = ds.has_subclass();
  j["has_attribute"] = ds.has_attribute();
  j["spec"] = spec;
  j["sha256"] = dataset_hash(ds);
  return j;
}

}  // namespace fcr::data
