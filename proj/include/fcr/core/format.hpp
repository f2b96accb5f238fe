#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <string>

namespace fcr {

/// Shortest text that round-trips a double ("%.17g"); used by every emitter
/// so re-emission of identical inputs is byte-identical.
inline std::string fmt_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

/// Bit pattern of a float32 as 8 hex digits.
inline std::string float_hex(float value) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", std::bit_cast<std::uint32_t>(value));
  return buf;
}

}  // namespace fcr
