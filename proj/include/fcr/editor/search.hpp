#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fcr/editor/removal.hpp"
#include "fcr/eval/evaluate.hpp"

namespace fcr::editor {

/// Accuracy summary of one edit strength.
struct RatePoint {
  double r = 0.0;
  double average = 0.0;
  double worst = 0.0;
  int worst_group = -1;
};

/// excessive(r): the worst group changed identity, or the average lost more
/// than lambda times what the initial worst group gained.
inline bool excessive(const RatePoint& base, const RatePoint& p, double lambda) {
  if (p.worst_group != base.worst_group) return true;
  return base.average - p.average > lambda * (p.worst - base.worst);
}

enum class SearchMode { Bisection, Grid };

inline std::string to_string(SearchMode m) { return m == SearchMode::Bisection ? "bisection" : "grid"; }
inline SearchMode search_mode_from_string(const std::string& s) {
  if (s == "bisection") return SearchMode::Bisection;
  if (s == "grid") return SearchMode::Grid;
  throw Error(ErrorKind::Usage, "unknown search mode '" + s + "'");
}

struct SearchOptions {
  double lambda = 1.0;
  double tol = 1e-3;
  SearchMode mode = SearchMode::Bisection;
  double step = 0.01;  // grid mode
};

struct SearchResult {
  double r_star = 0.0;
  RatePoint base;
  std::vector<RatePoint> visited;  // in evaluation order
};

using RateFunction = std::function<RatePoint(double)>;

/// Grid rates 0, step, 2*step, ... with 1 always included as the last point.
inline std::vector<double> rate_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw Error(ErrorKind::Usage, "grid step must lie in (0, 1]");
  std::vector<double> grid;
  for (std::size_t k = 0;; ++k) {
    const double r = static_cast<double>(k) * step;
    if (r >= 1.0 - 1e-12) break;
    grid.push_back(r);
  }
  grid.push_back(1.0);
  return grid;
}

/// Largest non-excessive rate. Bisection assumes a single crossing; grid mode
/// returns the last point before the first excessive one.
inline SearchResult search_rate(const RateFunction& at, const SearchOptions& options = {}) {
  if (!(options.lambda >= 0.0)) throw Error(ErrorKind::Domain, "lambda must be nonnegative");
  if (!(options.tol > 0.0)) throw Error(ErrorKind::Domain, "tolerance must be positive");
  SearchResult result;
  auto probe = [&](double r) {
    RatePoint p = at(r);
    p.r = r;
    result.visited.push_back(p);
    return p;
  };
  result.base = probe(0.0);
  if (result.base.worst_group < 0) throw Error(ErrorKind::Search, "no worst group at r = 0");

  if (options.mode == SearchMode::Grid) {
    const auto grid = rate_grid(options.step);
    result.r_star = 0.0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
      if (excessive(result.base, probe(grid[k]), options.lambda)) break;
      result.r_star = grid[k];
    }
    return result;
  }

  if (!excessive(result.base, probe(1.0), options.lambda)) {
    result.r_star = 1.0;
    return result;
  }
  double lo = 0.0, hi = 1.0;
  while (hi - lo > options.tol) {
    const double mid = 0.5 * (lo + hi);
    if (excessive(result.base, probe(mid), options.lambda)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  result.r_star = lo;
  return result;
}

inline RatePoint rate_point(double r, const eval::EvalReport& report) {
  return {r, report.average, report.worst, report.worst_group};
}

/// Search over independent pfn edits of `model` at `target`, scored on a
/// grouped validation set through its cached features.
inline SearchResult search_rate(const nn::Model& model, const EditTarget& target, const eval::HeadEvaluator& val,
                                const SearchOptions& options = {}) {
  if (val.dataset().num_groups() < 2) throw Error(ErrorKind::Search, "rate search needs at least two groups");
  const Tensor& bias = model.params(model.final_layer()).bias;
  return search_rate(
      [&](double r) {
        Tensor w = model.head_weight();
        w.at(target.j, target.i) = pfn_value(model, target, r);
        return rate_point(r, val.evaluate(w, bias));
      },
      options);
}

}  // namespace fcr::editor
