#pragma once

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fcr/core/format.hpp"
#include "fcr/eval/sweep.hpp"

namespace fcr::eval {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  out.close();
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Reports: cell,n,correct,acc
// ---------------------------------------------------------------------------

inline std::string report_csv(const EvalReport& r) {
  std::string out = "cell,n,correct,acc\n";
  auto line = [&out](const std::string& name, const CellStats& c) {
    out += name + "," + std::to_string(c.n) + "," + std::to_string(c.correct) + "," + fmt_real(c.accuracy()) + "\n";
  };
  for (std::size_t c = 0; c < r.per_class.size(); ++c) line("class_" + std::to_string(c), r.per_class[c]);
  for (const auto& [g, cell] : r.per_group) line("group_" + std::to_string(g), cell);
  for (std::size_t s = 0; s < r.per_subclass.size(); ++s) line("subclass_" + std::to_string(s), r.per_subclass[s]);
  line("overall", {r.n, r.correct});
  return out;
}

inline nlohmann::ordered_json report_json(const EvalReport& r) {
  auto cell = [](const CellStats& c) {
    return nlohmann::ordered_json{{"n", c.n}, {"correct", c.correct}, {"acc", c.accuracy()}};
  };
  nlohmann::ordered_json j;
  j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& c : r.per_class) j["per_class"].push_back(cell(c));
  j["per_group"] = nlohmann::ordered_json::object();
  for (const auto& [g, c] : r.per_group) j["per_group"][std::to_string(g)] = cell(c);
  j["per_subclass"] = nlohmann::ordered_json::array();
  for (const auto& c : r.per_subclass) j["per_subclass"].push_back(cell(c));
  j["n"] = r.n;
  j["correct"] = r.correct;
  j["average"] = r.average;
  j["worst_group"] = r.worst_group;
  j["worst"] = r.worst;
  j["gap"] = r.gap;
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    auto cell = [](const nlohmann::json& c) { return CellStats{c.at("n").get<std::size_t>(), c.at("correct").get<std::size_t>()}; };
    EvalReport r;
    for (const auto& c : j.at("per_class")) r.per_class.push_back(cell(c));
    for (const auto& [g, c] : j.at("per_group").items()) r.per_group[std::stoi(g)] = cell(c);
    for (const auto& c : j.at("per_subclass")) r.per_subclass.push_back(cell(c));
    r.n = j.at("n").get<std::size_t>();
    r.correct = j.at("correct").get<std::size_t>();
    r.average = j.at("average").get<double>();
    r.worst_group = j.at("worst_group").get<int>();
    r.worst = j.at("worst").get<double>();
    r.gap = j.at("gap").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("malformed report json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Curves: r,avg_acc,worst_acc,worst_group_id,<one column per cell>
// ---------------------------------------------------------------------------

inline std::string curve_csv(const SweepCurve& curve) {
  std::string out = "r,avg_acc,worst_acc,worst_group_id";
  for (int id : curve.cell_ids) out += ",acc_" + std::to_string(id);
  out += "\n";
  for (const auto& row : curve.rows) {
    out += fmt_real(row.r) + "," + fmt_real(row.average) + "," + fmt_real(row.worst) + "," +
           std::to_string(row.worst_group);
    for (double a : row.cells) out += "," + fmt_real(a);
    out += "\n";
  }
  return out;
}

inline SweepCurve curve_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> fields;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    return fields;
  };
  auto real = [](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw Error(ErrorKind::Format, "bad number '" + s + "' in curve csv");
    return v;
  };
  if (!std::getline(in, line)) throw Error(ErrorKind::Format, "empty curve csv");
  const auto header = split(line);
  if (header.size() < 4 || header[0] != "r" || header[3] != "worst_group_id") {
    throw Error(ErrorKind::Format, "unexpected curve csv header");
  }
  SweepCurve curve;
  for (std::size_t k = 4; k < header.size(); ++k) {
    if (header[k].rfind("acc_", 0) != 0) throw Error(ErrorKind::Format, "unexpected curve column " + header[k]);
    curve.cell_ids.push_back(std::stoi(header[k].substr(4)));
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) throw Error(ErrorKind::Format, "curve row has wrong field count");
    SweepRow row{real(f[0]), real(f[1]), real(f[2]), std::stoi(f[3]), {}};
    for (std::size_t k = 4; k < f.size(); ++k) row.cells.push_back(real(f[k]));
    curve.rows.push_back(std::move(row));
  }
  return curve;
}

inline nlohmann::ordered_json curve_json(const SweepCurve& curve) {
  nlohmann::ordered_json j;
  j["cell_ids"] = curve.cell_ids;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : curve.rows) {
    j["rows"].push_back({{"r", row.r},
                         {"avg_acc", row.average},
                         {"worst_acc", row.worst},
                         {"worst_group_id", row.worst_group},
                         {"cells", row.cells}});
  }
  return j;
}

inline SweepCurve curve_from_json(const nlohmann::json& j) {
  try {
    SweepCurve curve;
    curve.cell_ids = j.at("cell_ids").get<std::vector<int>>();
    for (const auto& row : j.at("rows")) {
      curve.rows.push_back({row.at("r").get<double>(), row.at("avg_acc").get<double>(),
                            row.at("worst_acc").get<double>(), row.at("worst_group_id").get<int>(),
                            row.at("cells").get<std::vector<double>>()});
    }
    return curve;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("malformed curve json: ") + e.what());
  }
}

enum class ReportFormat { Csv, Json };

inline ReportFormat report_format_from_string(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw Error(ErrorKind::Usage, "unknown report format '" + s + "'");
}

inline void emit_report(const EvalReport& r, const std::filesystem::path& path, ReportFormat format) {
  write_file(path, format == ReportFormat::Csv ? report_csv(r) : report_json(r).dump(2) + "\n");
}

inline void emit_report(const SweepCurve& c, const std::filesystem::path& path, ReportFormat format) {
  write_file(path, format == ReportFormat::Csv ? curve_csv(c) : curve_json(c).dump(2) + "\n");
}

/// Standalone SVG line chart of average and worst accuracy against r.
inline std::string curve_svg(const SweepCurve& curve, const std::string& title = "accuracy vs rate") {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
  auto x = [&](double r) { return L + r * (W - L - R); };
  auto y = [&](double a) { return H - B - a * (H - T - B); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" + title +
       "</text>\n";
  s += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - B) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - B) +
       "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0;
    s += "<text x=\"" + num(x(v)) + "\" y=\"" + num(H - B + 18) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + num(v) + "</text>\n";
    s += "<text x=\"" + num(L - 8) + "\" y=\"" + num(y(v) + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(v) + "</text>\n";
  }
  s += "<text x=\"" + num((L + W - R) / 2) + "\" y=\"" + num(H - 10) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">r</text>\n";
  auto polyline = [&](auto value, const char* colour, const char* label, double ly) {
    std::string pts;
    for (const auto& row : curve.rows) pts += num(x(row.r)) + "," + num(y(value(row))) + " ";
    if (!pts.empty()) pts.pop_back();
    s += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"2\" points=\"" + pts +
         "\"/>\n";
    s += "<text x=\"" + num(W - R - 90) + "\" y=\"" + num(ly) + "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" +
         colour + "\">" + label + "</text>\n";
  };
  polyline([](const SweepRow& r) { return r.average; }, "#1f77b4", "average", T + 14);
  polyline([](const SweepRow& r) { return r.worst; }, "#d62728", "worst group", T + 30);
  s += "</svg>\n";
  return s;
}

}  // namespace fcr::eval
