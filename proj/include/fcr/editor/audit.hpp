#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <string>

#include "fcr/core/format.hpp"
#include "fcr/nn/edit.hpp"

namespace fcr::editor {

/// One audit-log line. Values are kept as raw 32-bit hex so the log pins
/// the exact bits; the decimal form is for reading.
inline nlohmann::ordered_json audit_json(const nn::EditRecord& r) {
  nlohmann::ordered_json j;
  j["layer"] = r.layer;
  j["j"] = r.j;
  j["i"] = r.i;
  j["old_hex"] = float_hex(r.old_value);
  j["new_hex"] = float_hex(r.new_value);
  j["old"] = fmt_real(r.old_value);
  j["new"] = fmt_real(r.new_value);
  j["rate"] = fmt_real(r.rate);
  j["source"] = nn::to_string(r.source);
  j["sca"] = r.sca ? nlohmann::ordered_json(fmt_real(*r.sca)) : nlohmann::ordered_json(nullptr);
  j["ca"] = r.ca ? nlohmann::ordered_json(fmt_real(*r.ca)) : nlohmann::ordered_json(nullptr);
  j["dataset_hash"] = r.dataset_hash;
  return j;
}

inline std::string audit_line(const nn::EditRecord& r) { return audit_json(r).dump() + "\n"; }

inline void append_audit(const std::string& path, const nn::EditRecord& r) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open audit log " + path);
  out << audit_line(r);
  if (!out) throw Error(ErrorKind::Io, "cannot write audit log " + path);
}

}  // namespace fcr::editor
