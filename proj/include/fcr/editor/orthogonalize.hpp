#pragma once

#include <cmath>
#include <concepts>
#include <span>

#include "fcr/attribution/scores.hpp"
#include "fcr/core/error.hpp"

namespace fcr::editor {

namespace detail {

template <std::floating_point T>
double check_pivot(std::span<const T> row, std::size_t pivot) {
  if (pivot >= row.size()) throw Error(ErrorKind::OutOfRange, "pivot index outside weight row");
  const double wj = static_cast<double>(row[pivot]);
  if (!(std::fabs(wj) >= attribution::kPivotThreshold)) {
    throw Error(ErrorKind::DegeneratePivot, "pivot weight magnitude below 1e-8");
  }
  return wj;
}

}  // namespace detail

/// Replacement for pivot weight w_j of class row w that makes the augmented
/// normal [w', -1] orthogonal to [w, -1]:
///
///   f(w_j) = -(||w||^2 - w_j^2 + 1) / w_j
///
/// The bias is not part of the normal. Arithmetic is done in double.
template <std::floating_point T>
T orthogonalize(std::span<const T> row, std::size_t pivot) {
  const double wj = detail::check_pivot(row, pivot);
  double rest = 1.0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (k != pivot) rest += static_cast<double>(row[k]) * static_cast<double>(row[k]);
  }
  return static_cast<T>(-rest / wj);
}

/// Partial neutralization: r * orthogonalize(w, j) + (1 - r) * w_j.
/// r = 0 returns w_j and r = 1 returns orthogonalize(w, j), both exactly.
template <std::floating_point T>
T pfn(std::span<const T> row, std::size_t pivot, double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error(ErrorKind::Domain, "neutralization rate must lie in [0, 1]");
  const double wj = detail::check_pivot(row, pivot);
  const double full = static_cast<double>(orthogonalize(row, pivot));
  return static_cast<T>(rate * full + (1.0 - rate) * wj);
}

}  // namespace fcr::editor
