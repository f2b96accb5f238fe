#pragma once

#include <optional>
#include <string>

#include "fcr/core/error.hpp"
#include "fcr/nn/model.hpp"

namespace fcr::nn {

enum class EditSource { ClassRemoval, FictitiousRemoval, Manual };

inline std::string to_string(EditSource s) {
  switch (s) {
    case EditSource::ClassRemoval: return "class-removal";
    case EditSource::FictitiousRemoval: return "fictitious-removal";
    case EditSource::Manual: return "manual";
  }
  return "manual";
}

/// One single-scalar change to a model.
struct EditRecord {
  std::size_t layer = 0;
  std::size_t j = 0;  // output (class) index
  std::size_t i = 0;  // input (feature) index
  float old_value = 0.0f;
  float new_value = 0.0f;
  double rate = 1.0;  // neutralization rate in [0, 1]
  EditSource source = EditSource::Manual;
  std::optional<double> sca;  // score snapshot at edit time
  std::optional<double> ca;
  std::string dataset_hash;
};

/// Replaces weight (j, i) of a Dense layer; every other parameter is untouched.
inline EditRecord edit_weight(Model& model, std::size_t layer, std::size_t j, std::size_t i, float value) {
  if (layer >= model.layer_count() || !std::holds_alternative<Dense>(model.layers()[layer])) {
    throw Error(ErrorKind::OutOfRange, "layer " + std::to_string(layer) + " is not a dense layer");
  }
  Tensor& w = model.params(layer).weight;
  if (j >= w.shape[0] || i >= w.shape[1]) {
    throw Error(ErrorKind::OutOfRange, "coordinate (" + std::to_string(j) + ", " + std::to_string(i) +
                                           ") outside weight " + shape_string(w.shape));
  }
  EditRecord record;
  record.layer = layer;
  record.j = j;
  record.i = i;
  record.old_value = w.at(j, i);
  record.new_value = value;
  w.at(j, i) = value;
  return record;
}

}  // namespace fcr::nn
