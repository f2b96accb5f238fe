#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcr/attribution/scores.hpp"
#include "fcr/data/dataset.hpp"
#include "fcr/editor/orthogonalize.hpp"
#include "fcr/nn/edit.hpp"
#include "fcr/nn/features.hpp"
#include "fcr/nn/train.hpp"

namespace fcr::editor {

using attribution::CandidateSet;
using attribution::ClassAccumulators;
using attribution::Edge;
using attribution::Metric;
using attribution::ScoreTable;
using nn::EditRecord;

/// Coordinate of a single head weight.
struct EditTarget {
  std::size_t layer = 0;
  std::size_t j = 0;
  std::size_t i = 0;
};

/// Value that pfn would write at `target` of `model` for rate r.
inline float pfn_value(const nn::Model& model, const EditTarget& target, double rate) {
  const Tensor& w = model.params(target.layer).weight;
  if (target.j >= w.shape[0] || target.i >= w.shape[1]) throw Error(ErrorKind::OutOfRange, "edit target outside head");
  return pfn(std::span<const float>(w.data() + target.j * w.shape[1], w.shape[1]), target.i, rate);
}

/// Applies pfn at `target` in place and returns the record.
inline EditRecord apply_pfn(nn::Model& model, const EditTarget& target, double rate, nn::EditSource source) {
  const float value = pfn_value(model, target, rate);
  EditRecord record = nn::edit_weight(model, target.layer, target.j, target.i, value);
  record.rate = rate;
  record.source = source;
  return record;
}

struct RemovalResult {
  nn::Model model;
  EditRecord record;
  std::vector<Edge> ranking;   // candidate order that produced the pivot
  std::vector<std::string> log;
};

/// Class removal: pick the top-ranked edge for class c and neutralize that
/// feature in c's hyperplane. Degenerate pivots fall through to the next
/// candidate.
inline RemovalResult remove_class(const nn::Model& model, std::size_t c, const ScoreTable& table, double rate = 1.0,
                                  CandidateSet candidates = CandidateSet::ClassRow) {
  if (c >= model.num_classes()) throw Error(ErrorKind::OutOfRange, "class " + std::to_string(c) + " not in model");
  if (table.out_dim != model.num_classes() || table.in_dim != model.feature_dim()) {
    throw Error(ErrorKind::InputShape, "score table does not match model head");
  }
  RemovalResult result{model, {}, attribution::rank_edges(table, model.head_weight(), c, candidates), {}};
  const Tensor& w = model.head_weight();
  for (const Edge& e : result.ranking) {
    if (std::fabs(static_cast<double>(w.at(c, e.i))) < attribution::kPivotThreshold) {
      result.log.push_back("skipped degenerate pivot (" + std::to_string(c) + ", " + std::to_string(e.i) + ")");
      continue;
    }
    result.record = apply_pfn(result.model, {model.final_layer(), c, e.i}, rate, nn::EditSource::ClassRemoval);
    result.record.sca = table.score_of(e, c);
    result.record.ca = table.ca_of(e);
    return result;
  }
  throw Error(ErrorKind::NoViablePivot, "every candidate pivot for class " + std::to_string(c) + " is degenerate");
}

// ---------------------------------------------------------------------------
// Fictitious class removal
// ---------------------------------------------------------------------------

/// How the head clone M' is labelled.
///   Augmented:   K + 1 outputs; samples showing the feature get label K, the
///                rest keep their class.
///   FeatureOnly: 2 outputs; label 1 iff the sample shows the feature.
///   Subclass:    one output per subclass; label = subclass, c~ = `feature`.
enum class LabelMode { Augmented, FeatureOnly, Subclass };

/// Which per-sample label marks the fictitious feature in augmented and
/// feature-only modes.
enum class FeatureSource { Attribute, Subclass };

inline std::string to_string(FeatureSource s) { return s == FeatureSource::Attribute ? "attribute" : "subclass"; }
inline FeatureSource feature_source_from_string(const std::string& s) {
  if (s == "attribute") return FeatureSource::Attribute;
  if (s == "subclass") return FeatureSource::Subclass;
  throw Error(ErrorKind::Usage, "unknown feature source '" + s + "'");
}

inline std::string to_string(LabelMode m) {
  switch (m) {
    case LabelMode::Augmented: return "augmented";
    case LabelMode::FeatureOnly: return "feature-only";
    case LabelMode::Subclass: return "subclass";
  }
  return "augmented";
}
inline LabelMode label_mode_from_string(const std::string& s) {
  for (LabelMode m : {LabelMode::Augmented, LabelMode::FeatureOnly, LabelMode::Subclass}) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorKind::Usage, "unknown label mode '" + s + "'");
}

struct HeadCloneSpec {
  LabelMode mode = LabelMode::Augmented;
  FeatureSource source = FeatureSource::Attribute;
  int feature = 1;  // attribute value or subclass id carrying the feature
  nn::TrainConfig finetune = [] {
    nn::TrainConfig c;
    c.epochs = 3;
    return c;
  }();
  double min_recall = 0.5;  // below this the result is flagged
};

/// Head-clone labels for `ds` and the index of the fictitious class in them.
struct CloneLabels {
  std::vector<int> labels;
  std::size_t num_outputs = 0;
  std::size_t fictitious = 0;
};

inline CloneLabels clone_labels(const data::GroupedDataset& ds, const HeadCloneSpec& spec) {
  CloneLabels out;
  out.labels.resize(ds.size());
  switch (spec.mode) {
    case LabelMode::Augmented:
    case LabelMode::FeatureOnly: {
      const bool by_attribute = spec.source == FeatureSource::Attribute;
      if (by_attribute ? !ds.has_attribute() : !ds.has_subclass()) {
        throw Error(ErrorKind::MissingAttribute, "label mode needs " + to_string(spec.source) + " labels");
      }
      const std::size_t range = by_attribute ? ds.num_attribute_values : ds.num_subclasses;
      if (spec.feature < 0 || static_cast<std::size_t>(spec.feature) >= range) {
        throw Error(ErrorKind::Label, "fictitious " + to_string(spec.source) + " value out of range");
      }
      const std::vector<int>& marks = by_attribute ? ds.attribute : ds.subclass;
      out.num_outputs = spec.mode == LabelMode::Augmented ? ds.num_classes + 1 : 2;
      out.fictitious = spec.mode == LabelMode::Augmented ? ds.num_classes : 1;
      for (std::size_t n = 0; n < ds.size(); ++n) {
        const bool shows = marks[n] == spec.feature;
        if (spec.mode == LabelMode::Augmented) {
          out.labels[n] = shows ? static_cast<int>(ds.num_classes) : ds.labels[n];
        } else {
          out.labels[n] = shows ? 1 : 0;
        }
      }
      break;
    }
    case LabelMode::Subclass:
      if (!ds.has_subclass()) throw Error(ErrorKind::MissingAttribute, "subclass label mode needs subclass labels");
      if (spec.feature < 0 || static_cast<std::size_t>(spec.feature) >= ds.num_subclasses) {
        throw Error(ErrorKind::Label, "fictitious subclass out of range");
      }
      out.num_outputs = ds.num_subclasses;
      out.fictitious = static_cast<std::size_t>(spec.feature);
      out.labels = ds.subclass;
      break;
  }
  return out;
}

/// M' = copy of M whose final layer has `outputs` classes. In augmented mode
/// the original rows are kept and the extra row is freshly drawn.
inline nn::Model make_head_clone(const nn::Model& model, std::size_t outputs, bool keep_rows, std::uint64_t seed) {
  std::vector<nn::LayerSpec> layers = model.layers();
  layers.back() = nn::Dense{model.feature_dim(), outputs};
  nn::ModelMeta meta = model.meta();
  meta.class_names.clear();
  for (std::size_t c = 0; c < outputs; ++c) meta.class_names.push_back(std::to_string(c));
  nn::Model clone(model.input_shape(), layers, meta);
  for (std::size_t k = 0; k + 1 < model.layer_count(); ++k) clone.params(k) = model.params(k);

  Pcg32 rng(seed, 0x636c6f6e65ULL);
  const double stddev = std::sqrt(2.0 / static_cast<double>(model.feature_dim()));
  Tensor& w = clone.head_weight();
  Tensor& b = clone.params(clone.final_layer()).bias;
  for (std::size_t j = 0; j < outputs; ++j) {
    const bool copy = keep_rows && j < model.num_classes();
    for (std::size_t i = 0; i < model.feature_dim(); ++i) {
      w.at(j, i) = copy ? model.head_weight().at(j, i) : static_cast<float>(stddev * rng.normal());
    }
    b.values[j] = copy ? model.params(model.final_layer()).bias.values[j] : 0.0f;
  }
  return clone;
}

/// Everything learned about the fictitious class from the head clone.
struct FictitiousAttribution {
  nn::Model clone;
  CloneLabels labels;
  ClassAccumulators accumulators;
  double clone_recall = 0.0;  // recall of c~ on the fine-tuning data
  bool low_recall = false;
  nn::TrainHistory history;
};

/// Steps 1-5 of fictitious removal: clone, freeze, fine-tune the head on
/// `finetune_data`, then accumulate class statistics on the clone.
inline FictitiousAttribution attribute_fictitious(const nn::Model& model, const data::GroupedDataset& finetune_data,
                                                  const HeadCloneSpec& spec,
                                                  const attribution::AccumulateOptions& options = {},
                                                  std::size_t threads = 1) {
  FictitiousAttribution out{{}, clone_labels(finetune_data, spec), {}, 0.0, false, {}};
  out.clone = make_head_clone(model, out.labels.num_outputs, spec.mode == LabelMode::Augmented, spec.finetune.seed);
  nn::TrainConfig config = spec.finetune;
  config.freeze = nn::backbone_tensor_names(out.clone);
  out.history = nn::train(out.clone, finetune_data.view(out.labels.labels), config);
  out.clone.meta().training["head_clone"] = {{"label_mode", to_string(spec.mode)},
                                             {"feature", spec.feature},
                                             {"epochs", config.epochs},
                                             {"lr", config.lr},
                                             {"batch_size", config.batch_size}};

  const auto features = nn::extract_features(out.clone, finetune_data.view(out.labels.labels), threads);
  out.accumulators = attribution::accumulate(out.clone.head_weight(), out.clone.params(out.clone.final_layer()).bias,
                                             out.clone.final_layer(), features, out.labels.labels, options);
  const auto predictions =
      nn::predict_head(out.clone.head_weight(), out.clone.params(out.clone.final_layer()).bias, features);
  std::size_t hits = 0, total = 0;
  for (std::size_t n = 0; n < predictions.size(); ++n) {
    if (static_cast<std::size_t>(out.labels.labels[n]) != out.labels.fictitious) continue;
    ++total;
    hits += static_cast<std::size_t>(predictions[n]) == out.labels.fictitious;
  }
  out.clone_recall = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
  out.low_recall = out.clone_recall < spec.min_recall;
  return out;
}

/// Real class most reliant on feature i: argmax_y |w_{y,i}| of M's head.
inline std::size_t default_target_class(const nn::Model& model, std::size_t feature) {
  const Tensor& w = model.head_weight();
  std::size_t best = 0;
  for (std::size_t y = 1; y < model.num_classes(); ++y) {
    if (std::fabs(w.at(y, feature)) > std::fabs(w.at(best, feature))) best = y;
  }
  return best;
}

struct FictitiousResult {
  nn::Model model;  // M with one weight edited
  EditRecord record;
  EditTarget target;
  std::vector<Edge> ranking;  // clone edges for c~ in rank order
  std::vector<std::string> log;
};

/// Step 6: carries the feature index of the clone's top edge for c~ over to
/// M and applies pfn at (y*, i*) using M's own row.
inline FictitiousResult edit_from_attribution(const nn::Model& model, const FictitiousAttribution& attr,
                                              std::optional<std::size_t> target_class, double rate,
                                              Metric metric = Metric::Sca,
                                              CandidateSet candidates = CandidateSet::ClassRow) {
  if (target_class && *target_class >= model.num_classes()) {
    throw Error(ErrorKind::OutOfRange, "target class outside model");
  }
  const ScoreTable table = attribution::baseline_scores(attr.clone.head_weight(), attr.accumulators, metric);
  FictitiousResult result{model, {}, {}, {}, {}};
  result.ranking = attribution::rank_edges(table, attr.clone.head_weight(), attr.labels.fictitious, candidates);
  for (const Edge& e : result.ranking) {
    const std::size_t y = target_class ? *target_class : default_target_class(model, e.i);
    if (std::fabs(static_cast<double>(model.head_weight().at(y, e.i))) < attribution::kPivotThreshold) {
      result.log.push_back("skipped degenerate pivot (" + std::to_string(y) + ", " + std::to_string(e.i) + ")");
      continue;
    }
    result.target = {model.final_layer(), y, e.i};
    result.record = apply_pfn(result.model, result.target, rate, nn::EditSource::FictitiousRemoval);
    result.record.sca = table.score_of(e, attr.labels.fictitious);
    result.record.ca = table.ca_of(e);
    return result;
  }
  throw Error(ErrorKind::NoViablePivot, "no viable pivot for the fictitious class");
}

/// Full fictitious removal; also returns the fine-tuned clone.
inline std::pair<FictitiousResult, FictitiousAttribution> remove_fictitious(
    const nn::Model& model, const data::GroupedDataset& finetune_data, const HeadCloneSpec& spec,
    std::optional<std::size_t> target_class, double rate, const attribution::AccumulateOptions& options = {}) {
  FictitiousAttribution attr = attribute_fictitious(model, finetune_data, spec, options);
  FictitiousResult result = edit_from_attribution(model, attr, target_class, rate);
  if (attr.low_recall) {
    result.log.push_back("warning: clone recall for the fictitious class is " + std::to_string(attr.clone_recall));
  }
  return {std::move(result), std::move(attr)};
}

}  // namespace fcr::editor
