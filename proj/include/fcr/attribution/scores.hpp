#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fcr/attribution/accumulate.hpp"
#include "fcr/core/format.hpp"

namespace fcr::attribution {

/// Shannon entropy (nats) of a nonnegative mass vector after normalisation,
/// with 0 ln 0 = 0. An all-zero vector has entropy 0.
inline double entropy(std::span<const double> mass) {
  double total = 0.0;
  for (double m : mass) {
    if (m < 0.0 || std::isnan(m)) throw Error(ErrorKind::Domain, "entropy needs nonnegative mass");
    total += m;
  }
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double m : mass) {
    if (m > 0.0) {
      const double p = m / total;
      h -= p * std::log(p);
    }
  }
  return h;
}

/// Floor applied to the activation-row entropy in the CA denominator.
inline constexpr double kEntropyFloor = 1e-6;

/// Class-association score: H(G row) / max(H(A row), 1e-6).
inline double ca_score(const ClassAccumulators& acc, Edge e) {
  return entropy(acc.g_row(e.j, e.i)) / std::max(entropy(acc.a_row(e.j, e.i)), kEntropyFloor);
}

/// Specific class-association score: CA(e) * G[e, c] * A[e, c].
inline double sca_score(const ClassAccumulators& acc, Edge e, std::size_t c) {
  return ca_score(acc, e) * acc.g(e.j, e.i, c) * acc.a(e.j, e.i, c);
}

enum class Metric { Sca, L1, ActOnly, GradOnly, GradTimesAct, FisherDiag };

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::Sca: return "sca";
    case Metric::L1: return "l1";
    case Metric::ActOnly: return "act-only";
    case Metric::GradOnly: return "grad-only";
    case Metric::GradTimesAct: return "grad-times-act";
    case Metric::FisherDiag: return "fisher-diag";
  }
  return "sca";
}

inline Metric metric_from_string(const std::string& name) {
  for (Metric m : {Metric::Sca, Metric::L1, Metric::ActOnly, Metric::GradOnly, Metric::GradTimesAct,
                   Metric::FisherDiag}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorKind::Usage, "unknown metric '" + name + "'");
}

/// Per-edge CA plus one score per (edge, class) under a named metric. For
/// Metric::Sca the score column is the SCA score.
struct ScoreTable {
  Metric metric = Metric::Sca;
  std::size_t layer = 0;
  std::size_t out_dim = 0;
  std::size_t in_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> ca;     // [j * in_dim + i]
  std::vector<double> score;  // [(j * in_dim + i) * num_classes + c]
  std::string tie_rule = "score desc, then in-index i asc, then out-index j asc; |w| < 1e-8 demoted";

  double ca_of(Edge e) const { return ca[e.j * in_dim + e.i]; }
  double score_of(Edge e, std::size_t c) const { return score[(e.j * in_dim + e.i) * num_classes + c]; }
};

inline ScoreTable make_table(const ClassAccumulators& acc, Metric metric) {
  ScoreTable t;
  t.metric = metric;
  t.layer = acc.layer;
  t.out_dim = acc.out_dim;
  t.in_dim = acc.in_dim;
  t.num_classes = acc.num_classes;
  t.ca.resize(acc.edge_count());
  t.score.resize(acc.edge_count() * acc.num_classes);
  for (std::size_t j = 0; j < acc.out_dim; ++j)
    for (std::size_t i = 0; i < acc.in_dim; ++i) t.ca[j * acc.in_dim + i] = ca_score(acc, {j, i});
  return t;
}

inline ScoreTable sca_table(const ClassAccumulators& acc) {
  ScoreTable t = make_table(acc, Metric::Sca);
  for (std::size_t j = 0; j < acc.out_dim; ++j)
    for (std::size_t i = 0; i < acc.in_dim; ++i)
      for (std::size_t c = 0; c < acc.num_classes; ++c)
        t.score[acc.offset(j, i, c)] = t.ca[j * acc.in_dim + i] * acc.g(j, i, c) * acc.a(j, i, c);
  return t;
}

/// Baseline importance scores. l1 = |w|; act-only = A; grad-only = G;
/// grad-times-act = G*A; fisher-diag = sum of squared per-sample gradients.
inline ScoreTable baseline_scores(const Tensor& head_weight, const ClassAccumulators& acc, Metric metric) {
  if (metric == Metric::Sca) return sca_table(acc);
  ScoreTable t = make_table(acc, metric);
  for (std::size_t j = 0; j < acc.out_dim; ++j) {
    for (std::size_t i = 0; i < acc.in_dim; ++i) {
      for (std::size_t c = 0; c < acc.num_classes; ++c) {
        double s = 0.0;
        switch (metric) {
          case Metric::L1: s = std::fabs(static_cast<double>(head_weight.at(j, i))); break;
          case Metric::ActOnly: s = acc.a(j, i, c); break;
          case Metric::GradOnly: s = acc.g(j, i, c); break;
          case Metric::GradTimesAct: s = acc.g(j, i, c) * acc.a(j, i, c); break;
          case Metric::FisherDiag: s = acc.fisher(j, i, c); break;
          case Metric::Sca: break;
        }
        t.score[acc.offset(j, i, c)] = s;
      }
    }
  }
  return t;
}

inline ScoreTable baseline_scores(const nn::Model& model, const ClassAccumulators& acc, Metric metric) {
  return baseline_scores(model.head_weight(), acc, metric);
}

enum class CandidateSet { ClassRow, FullLayer };

inline std::string to_string(CandidateSet s) { return s == CandidateSet::ClassRow ? "class-row" : "full-layer"; }
inline CandidateSet candidate_set_from_string(const std::string& s) {
  if (s == "class-row") return CandidateSet::ClassRow;
  if (s == "full-layer") return CandidateSet::FullLayer;
  throw Error(ErrorKind::Usage, "unknown candidate set '" + s + "'");
}

/// Smallest |w| accepted as an orthogonalisation pivot.
inline constexpr double kPivotThreshold = 1e-8;

/// Edges for class c in descending score order. Ties go to the lower
/// in-index i, then the lower out-index j. Edges whose weight magnitude is
/// below the pivot threshold are moved to the tail.
inline std::vector<Edge> rank_edges(const ScoreTable& table, const Tensor& head_weight, std::size_t c,
                                    CandidateSet candidates = CandidateSet::ClassRow) {
  if (c >= table.num_classes) throw Error(ErrorKind::OutOfRange, "class " + std::to_string(c) + " not scored");
  std::vector<Edge> edges;
  if (candidates == CandidateSet::ClassRow) {
    if (c >= table.out_dim) throw Error(ErrorKind::OutOfRange, "class row outside head");
    for (std::size_t i = 0; i < table.in_dim; ++i) edges.push_back({c, i});
  } else {
    for (std::size_t j = 0; j < table.out_dim; ++j)
      for (std::size_t i = 0; i < table.in_dim; ++i) edges.push_back({j, i});
  }
  if (edges.empty()) throw Error(ErrorKind::OutOfRange, "empty candidate set");
  auto viable = [&](const Edge& e) { return std::fabs(static_cast<double>(head_weight.at(e.j, e.i))) >= kPivotThreshold; };
  std::stable_sort(edges.begin(), edges.end(), [&](const Edge& x, const Edge& y) {
    const bool vx = viable(x), vy = viable(y);
    if (vx != vy) return vx;
    const double sx = table.score_of(x, c), sy = table.score_of(y, c);
    if (sx != sy) return sx > sy;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  return edges;
}

/// CSV with columns layer,j,i,class,A,G,CA,SCA,rank. `rank` is the 1-based
/// position of the edge in rank_edges(class) and empty for edges outside
/// the candidate set.
inline std::string score_csv(const ClassAccumulators& acc, const ScoreTable& table, const Tensor& head_weight,
                             CandidateSet candidates) {
  std::string out = "layer,j,i,class,A,G,CA,SCA,rank\n";
  for (std::size_t c = 0; c < acc.num_classes; ++c) {
    std::vector<std::size_t> rank(acc.edge_count(), 0);
    if (candidates == CandidateSet::FullLayer || c < acc.out_dim) {
      const auto order = rank_edges(table, head_weight, c, candidates);
      for (std::size_t r = 0; r < order.size(); ++r) rank[order[r].j * acc.in_dim + order[r].i] = r + 1;
    }
    for (std::size_t j = 0; j < acc.out_dim; ++j) {
      for (std::size_t i = 0; i < acc.in_dim; ++i) {
        const std::size_t e = j * acc.in_dim + i;
        out += std::to_string(acc.layer) + "," + std::to_string(j) + "," + std::to_string(i) + "," +
               std::to_string(c) + "," + fmt_real(acc.a(j, i, c)) + "," + fmt_real(acc.g(j, i, c)) + "," +
               fmt_real(table.ca[e]) + "," + fmt_real(table.score_of({j, i}, c)) + "," +
               (rank[e] ? std::to_string(rank[e]) : std::string()) + "\n";
      }
    }
  }
  return out;
}

}  // namespace fcr::attribution
