#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. Plain loops only; nothing here calls into the code
// under test except for reading inputs.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ectg/cause_analysis.hpp"
#include "ectg/ect_graph.hpp"
#include "ectg/nn/tensor.hpp"

namespace ectg::testing {

struct Recount {
  std::vector<std::pair<std::string, std::string>> pairs;  // every observation
};

// Nested-loop recount: list every observed (head, tail) and count by linear scans.
inline Recount recount(const std::vector<Dialogue>& ds, const SpanSource& src) {
  Recount r;
  for (const auto& d : ds) {
    for (std::size_t i = 0; i < d.utterances.size(); ++i) {
      for (std::size_t k = 0; k < d.utterances.size(); ++k) {
        if (k != i + 1 || d.utterances[k].speaker != Role::kListener) continue;
        for (const auto& h : utterance_concepts(src, d, i)) {
          for (const auto& t : utterance_concepts(src, d, k)) r.pairs.emplace_back(h, t);
        }
      }
    }
  }
  return r;
}

using OracleEdge = std::tuple<std::string, std::string, double, std::uint64_t>;

inline std::vector<OracleEdge> oracle_edges(const Recount& r, double thr, std::uint64_t min_count) {
  std::vector<OracleEdge> out;
  const double n = static_cast<double>(r.pairs.size());
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    const auto& [h, t] = r.pairs[i];
    bool seen = false;
    for (std::size_t k = 0; k < i; ++k) seen = seen || r.pairs[k] == r.pairs[i];
    if (seen) continue;
    std::uint64_t j = 0, hc = 0, tc = 0;
    for (const auto& p : r.pairs) {
      j += p == r.pairs[i];
      hc += p.first == h;
      tc += p.second == t;
    }
    const double v = std::log((static_cast<double>(j) / n) /
                              ((static_cast<double>(hc) / n) * (static_cast<double>(tc) / n)));
    if (j >= min_count && v >= thr) out.emplace_back(h, t, v, j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<OracleEdge> graph_edges(const EctGraph& g) {
  std::vector<OracleEdge> out;
  for (const auto& e : g.edges()) out.emplace_back(g.name(e.head), g.name(e.tail), e.pmi, e.count);
  return out;
}


namespace scalar {

using nn::Tensor;
using Vec = std::vector<double>;

// x (1 x n) times W (n x m, row-major) in plain loops.
inline Vec vecmat(const Vec& x, const Tensor& w) {
  Vec out(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += x[i] * w.at(i, j);
  }
  return out;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec cat(std::initializer_list<Vec> parts) {
  Vec out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline Vec softmax_vec(const Vec& x) {
  double m = -INFINITY;
  for (double v : x) m = std::max(m, v);
  Vec out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (out[i] = std::exp(x[i] - m));
  for (auto& v : out) v /= z;
  return out;
}

inline Vec row(const Tensor& t, std::size_t r) {
  Vec out(t.cols());
  for (std::size_t c = 0; c < t.cols(); ++c) out[c] = t.at(r, c);
  return out;
}


}  // namespace scalar

}  // namespace ectg::testing
