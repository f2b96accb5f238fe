#pragma once

#include <span>
#include <vector>

#include "fcr/editor/removal.hpp"
#include "fcr/eval/evaluate.hpp"

namespace fcr::eval {

struct SweepRow {
  double r = 0.0;
  double average = 0.0;
  double worst = 0.0;
  int worst_group = -1;
  std::vector<double> cells;  // accuracy per entry of SweepCurve::cell_ids
  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

/// Accuracy against edit strength. Cells are groups when the dataset has
/// attribute labels and classes otherwise.
struct SweepCurve {
  std::vector<int> cell_ids;
  std::vector<SweepRow> rows;
  friend bool operator==(const SweepCurve&, const SweepCurve&) = default;
};

inline std::vector<int> cell_ids(const EvalReport& report) {
  std::vector<int> ids;
  if (report.grouped()) {
    for (const auto& [g, _] : report.per_group) ids.push_back(g);
  } else {
    for (std::size_t c = 0; c < report.per_class.size(); ++c) ids.push_back(static_cast<int>(c));
  }
  return ids;
}

inline SweepRow sweep_row(double r, const EvalReport& report) {
  SweepRow row{r, report.average, report.worst, report.worst_group, {}};
  if (report.grouped()) {
    for (const auto& [_, cell] : report.per_group) row.cells.push_back(cell.accuracy());
  } else {
    for (const auto& cell : report.per_class) row.cells.push_back(cell.accuracy());
  }
  return row;
}

inline void check_grid(std::span<const double> grid) {
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] >= 0.0 && grid[k] <= 1.0)) throw Error(ErrorKind::UnsortedGrid, "rate grid leaves [0, 1]");
    if (k > 0 && !(grid[k] > grid[k - 1])) throw Error(ErrorKind::UnsortedGrid, "rate grid is not strictly increasing");
  }
}

/// One independent pfn edit of `model` at `target` per grid rate.
inline SweepCurve sweep(const nn::Model& model, const editor::EditTarget& target, std::span<const double> grid,
                        const HeadEvaluator& evaluator) {
  check_grid(grid);
  const Tensor& bias = model.params(model.final_layer()).bias;
  SweepCurve curve;
  curve.cell_ids = cell_ids(evaluator.evaluate(model));
  for (double r : grid) {
    Tensor w = model.head_weight();
    w.at(target.j, target.i) = editor::pfn_value(model, target, r);
    curve.rows.push_back(sweep_row(r, evaluator.evaluate(w, bias)));
  }
  return curve;
}

}  // namespace fcr::eval
