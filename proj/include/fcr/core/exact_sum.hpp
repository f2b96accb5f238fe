#pragma once

#include <cmath>

#include "fcr/core/error.hpp"

namespace fcr {

/// Fixed-point accumulator with 2^-64 resolution in a 128-bit integer.
/// Integer addition is associative, so the total does not depend on the order
/// in which terms arrive, and the sum of a duplicated multiset is exactly
/// twice the original. Terms must satisfy |x| < 2^60.
class ExactSum {
 public:
  static constexpr double kScale = 0x1p64;

  void add(double x) {
    if (!(std::fabs(x) < 0x1p60)) throw Error(ErrorKind::Domain, "term outside exact-sum range");
    acc_ += static_cast<__int128>(x * kScale);
  }
  ExactSum& operator+=(const ExactSum& other) {
    acc_ += other.acc_;
    return *this;
  }
  double value() const { return static_cast<double>(acc_) / kScale; }

 private:
  __int128 acc_ = 0;
};

}  // namespace fcr
