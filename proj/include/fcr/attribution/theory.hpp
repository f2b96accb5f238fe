#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "fcr/attribution/scores.hpp"

// Quantities from the class-association argument: an edge that is active for
// fewer classes carries more information (forward), and an edge with large
// gradients for more classes takes part in more pairwise discriminations
// (backward).

namespace fcr::attribution::theory {

/// H(C | n) when the activation mass is spread uniformly over `active` classes.
inline double uniform_conditional_entropy(std::size_t active) {
  if (active == 0) throw Error(ErrorKind::Domain, "need at least one active class");
  return std::log(static_cast<double>(active));
}

/// Information gain H(C) - H(C | n) for a node active uniformly over `active` classes.
inline double information_gain(double class_entropy, std::size_t active) {
  return class_entropy - uniform_conditional_entropy(active);
}

/// Information gain computed from an explicit mass vector over classes.
inline double information_gain(double class_entropy, std::span<const double> mass) {
  return class_entropy - entropy(mass);
}

/// Number of class pairs an edge can help separate when its gradients are
/// large for n classes: n(n-1)/2.
inline std::uint64_t mutual_discriminations(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

}  // namespace fcr::attribution::theory
