#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fcr/attribution/scores.hpp"
#include "fcr/editor/orthogonalize.hpp"
#include "fcr/eval/evaluate.hpp"

namespace fcr::attribution {

struct OracleEntry {
  Edge edge;
  double on_drop = 0.0;   // class-c accuracy lost by orthogonalizing this edge
  double off_drop = 0.0;  // mean accuracy lost over the other classes
  bool degenerate = false;
};

/// Orthogonalizes every candidate edge in turn on a copy of the head and
/// ranks edges by class-c accuracy drop (larger first), then smaller
/// off-class drop, then lower i, then lower j. Degenerate pivots go last.
inline std::vector<OracleEntry> brute_force_oracle(const nn::Model& model, std::size_t c,
                                                   const eval::HeadEvaluator& evaluator,
                                                   CandidateSet candidates = CandidateSet::ClassRow) {
  const std::size_t K = model.num_classes(), P = model.feature_dim();
  if (c >= K) throw Error(ErrorKind::OutOfRange, "class " + std::to_string(c) + " not in model");
  const Tensor& bias = model.params(model.final_layer()).bias;
  const auto base = evaluator.evaluate(model);

  std::vector<OracleEntry> entries;
  Tensor w = model.head_weight();
  const std::size_t j_lo = candidates == CandidateSet::ClassRow ? c : 0;
  const std::size_t j_hi = candidates == CandidateSet::ClassRow ? c + 1 : K;
  for (std::size_t j = j_lo; j < j_hi; ++j) {
    for (std::size_t i = 0; i < P; ++i) {
      OracleEntry e{{j, i}, 0.0, 0.0, false};
      const float old = w.at(j, i);
      if (std::fabs(static_cast<double>(old)) < kPivotThreshold) {
        e.degenerate = true;
        entries.push_back(e);
        continue;
      }
      w.at(j, i) = editor::orthogonalize(std::span<const float>(w.data() + j * P, P), i);
      const auto report = evaluator.evaluate(w, bias);
      w.at(j, i) = old;
      e.on_drop = base.per_class[c].accuracy() - report.per_class[c].accuracy();
      double off = 0.0;
      std::size_t others = 0;
      for (std::size_t k = 0; k < K; ++k) {
        if (k == c || base.per_class[k].n == 0) continue;
        off += base.per_class[k].accuracy() - report.per_class[k].accuracy();
        ++others;
      }
      e.off_drop = others ? off / static_cast<double>(others) : 0.0;
      entries.push_back(e);
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const OracleEntry& x, const OracleEntry& y) {
    if (x.degenerate != y.degenerate) return !x.degenerate;
    if (x.on_drop != y.on_drop) return x.on_drop > y.on_drop;
    if (x.off_drop != y.off_drop) return x.off_drop < y.off_drop;
    if (x.edge.i != y.edge.i) return x.edge.i < y.edge.i;
    return x.edge.j < y.edge.j;
  });
  return entries;
}

/// 1 + number of entries with a strictly larger on-class drop (ties share a
/// rank). Throws if the edge is not in the ranking.
inline std::size_t oracle_rank(const std::vector<OracleEntry>& ranking, Edge edge) {
  const auto it = std::find_if(ranking.begin(), ranking.end(), [&](const OracleEntry& e) { return e.edge == edge; });
  if (it == ranking.end()) throw Error(ErrorKind::OutOfRange, "edge not among oracle candidates");
  return 1 + static_cast<std::size_t>(std::count_if(ranking.begin(), ranking.end(), [&](const OracleEntry& e) {
           return !e.degenerate && e.on_drop > it->on_drop;
         }));
}

inline std::string oracle_csv(const std::vector<OracleEntry>& ranking, std::size_t c) {
  std::string out = "class,j,i,on_drop,off_drop,degenerate,rank\n";
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    const auto& e = ranking[r];
    out += std::to_string(c) + "," + std::to_string(e.edge.j) + "," + std::to_string(e.edge.i) + "," +
           fmt_real(e.on_drop) + "," + fmt_real(e.off_drop) + "," + (e.degenerate ? "1" : "0") + "," +
           std::to_string(r + 1) + "\n";
  }
  return out;
}

}  // namespace fcr::attribution
