#pragma once

#include <limits>
#include <map>
#include <span>
#include <vector>

#include "fcr/data/dataset.hpp"
#include "fcr/nn/features.hpp"

namespace fcr::eval {

struct CellStats {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
  friend bool operator==(const CellStats&, const CellStats&) = default;
};

/// Accuracy broken down by class, group and (when present) subclass.
/// Without group labels, worst/gap are taken over classes.
struct EvalReport {
  std::vector<CellStats> per_class;
  std::map<int, CellStats> per_group;  // empty when the dataset has no attribute
  std::vector<CellStats> per_subclass; // empty when the dataset has no subclass
  std::size_t n = 0;
  std::size_t correct = 0;
  double average = 0.0;
  int worst_group = -1;
  double worst = 0.0;
  double gap = 0.0;

  bool grouped() const { return !per_group.empty(); }
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline EvalReport evaluate_predictions(std::span<const int> predictions, const data::GroupedDataset& ds) {
  if (ds.size() == 0) throw Error(ErrorKind::EmptySplit, "cannot evaluate an empty " + to_string(ds.split) + " split");
  if (predictions.size() != ds.size()) throw Error(ErrorKind::Pairing, "prediction count does not match dataset");
  EvalReport report;
  report.per_class.resize(ds.num_classes);
  if (ds.has_subclass()) report.per_subclass.resize(ds.num_subclasses);
  if (ds.has_attribute()) {
    for (std::size_t g = 0; g < ds.num_groups(); ++g) report.per_group[static_cast<int>(g)];
  }
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const bool hit = predictions[k] == ds.labels[k];
    auto bump = [hit](CellStats& cell) {
      ++cell.n;
      cell.correct += hit;
    };
    bump(report.per_class[static_cast<std::size_t>(ds.labels[k])]);
    if (ds.has_subclass()) bump(report.per_subclass[static_cast<std::size_t>(ds.subclass[k])]);
    if (ds.has_attribute()) bump(report.per_group[ds.group_id(k)]);
    ++report.n;
    report.correct += hit;
  }
  report.average = static_cast<double>(report.correct) / static_cast<double>(report.n);
  report.worst = std::numeric_limits<double>::infinity();
  auto consider = [&report](int id, const CellStats& cell) {
    if (cell.n > 0 && cell.accuracy() < report.worst) {
      report.worst = cell.accuracy();
      report.worst_group = id;
    }
  };
  if (report.grouped()) {
    for (const auto& [g, cell] : report.per_group) consider(g, cell);
  } else {
    for (std::size_t c = 0; c < report.per_class.size(); ++c) consider(static_cast<int>(c), report.per_class[c]);
  }
  report.gap = report.average - report.worst;
  return report;
}

inline EvalReport evaluate(const nn::Model& model, const data::GroupedDataset& ds, std::size_t threads = 1) {
  if (ds.size() == 0) throw Error(ErrorKind::EmptySplit, "cannot evaluate an empty " + to_string(ds.split) + " split");
  const auto predictions = nn::predict(model, ds.view(), threads);
  return evaluate_predictions(predictions, ds);
}

/// Scores head variants against cached penultimate features of one dataset.
class HeadEvaluator {
 public:
  HeadEvaluator(const nn::Model& model, const data::GroupedDataset& ds, std::size_t threads = 1)
      : ds_(&ds), features_(nn::extract_features(model, ds.view(), threads)) {}

  HeadEvaluator(nn::FeatureMatrix features, const data::GroupedDataset& ds) : ds_(&ds), features_(std::move(features)) {
    if (features_.count != ds.size()) throw Error(ErrorKind::Pairing, "feature rows do not match dataset");
  }

  EvalReport evaluate(const Tensor& weight, const Tensor& bias) const {
    return evaluate_predictions(nn::predict_head(weight, bias, features_), *ds_);
  }
  EvalReport evaluate(const nn::Model& model) const {
    return evaluate(model.head_weight(), model.params(model.final_layer()).bias);
  }

  const nn::FeatureMatrix& features() const { return features_; }
  const data::GroupedDataset& dataset() const { return *ds_; }

 private:
  const data::GroupedDataset* ds_;
  nn::FeatureMatrix features_;
};

}  // namespace fcr::eval
