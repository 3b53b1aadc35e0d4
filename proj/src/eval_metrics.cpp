#include "ectg/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace ectg {

namespace {

using Gram = std::vector<std::string>;
using GramCounts = std::map<Gram, std::size_t>;

GramCounts ngrams(const Sentence& s, std::size_t n) {
  GramCounts out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[Gram(s.begin() + static_cast<std::ptrdiff_t>(i),
                                                             s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

void check_pairs(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs, const char* what) {
  if (hyps.empty()) throw MetricError(std::string(what) + ": no hypotheses");
  if (hyps.size() != refs.size()) {
    throw MetricError(std::string(what) + ": " + std::to_string(hyps.size()) + " hypotheses but " +
                      std::to_string(refs.size()) + " references");
  }
}

std::size_t lcs(const Sentence& a, const Sentence& b) {
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (const auto& x : a) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = x == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

}  // namespace

double bleu4(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references, double epsilon) {
  check_pairs(hypotheses, references, "bleu4");
  double matches[4] = {0, 0, 0, 0};
  double totals[4] = {0, 0, 0, 0};
  double hyp_len = 0.0;
  double ref_len = 0.0;
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    hyp_len += static_cast<double>(hypotheses[k].size());
    ref_len += static_cast<double>(references[k].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const GramCounts ref = ngrams(references[k], n);
      for (const auto& [g, c] : ngrams(hypotheses[k], n)) {
        const auto it = ref.find(g);
        if (it != ref.end()) matches[n - 1] += static_cast<double>(std::min(c, it->second));
        totals[n - 1] += static_cast<double>(c);
      }
    }
  }
  if (hyp_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    const double p = matches[n] > 0.0 ? matches[n] / totals[n] : epsilon;
    log_sum += std::log(p);
  }
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

double distinct_n(const std::vector<Sentence>& hypotheses, std::size_t n) {
  if (n == 0) throw MetricError("distinct_n: n must be positive");
  std::set<Gram> seen;
  std::size_t total = 0;
  for (const auto& h : hypotheses) {
    for (const auto& [g, c] : ngrams(h, n)) {
      seen.insert(g);
      total += c;
    }
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(seen.size()) / static_cast<double>(total);
}

double rouge_l(const Sentence& hypothesis, const Sentence& reference) {
  if (reference.empty() || hypothesis.empty()) return 0.0;
  const double l = static_cast<double>(lcs(hypothesis, reference));
  if (l == 0.0) return 0.0;
  const double p = l / static_cast<double>(hypothesis.size());
  const double r = l / static_cast<double>(reference.size());
  return 100.0 * 2.0 * p * r / (p + r);
}

double rouge_l(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references) {
  check_pairs(hypotheses, references, "rouge_l");
  double sum = 0.0;
  for (std::size_t k = 0; k < hypotheses.size(); ++k) sum += rouge_l(hypotheses[k], references[k]);
  return sum / static_cast<double>(hypotheses.size());
}

double cider(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references) {
  check_pairs(hypotheses, references, "cider");
  if (hypotheses.size() < 2) throw MetricError("cider: IDF undefined for a single example");
  constexpr double kSigma = 6.0;
  const double log_docs = std::log(static_cast<double>(references.size()));

  std::map<Gram, double> df;
  for (const auto& r : references) {
    for (std::size_t n = 1; n <= 4; ++n) {
      for (const auto& [g, c] : ngrams(r, n)) df[g] += 1.0;
    }
  }
  struct Vec {
    std::map<Gram, double> w[4];
    double norm[4] = {0, 0, 0, 0};
  };
  const auto weigh = [&](const Sentence& s) {
    Vec v;
    for (std::size_t n = 1; n <= 4; ++n) {
      for (const auto& [g, c] : ngrams(s, n)) {
        const auto it = df.find(g);
        const double idf = log_docs - std::log(std::max(1.0, it == df.end() ? 0.0 : it->second));
        const double x = static_cast<double>(c) * idf;
        v.w[n - 1][g] = x;
        v.norm[n - 1] += x * x;
      }
      v.norm[n - 1] = std::sqrt(v.norm[n - 1]);
    }
    return v;
  };

  double total = 0.0;
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    const Vec h = weigh(hypotheses[k]);
    const Vec r = weigh(references[k]);
    const double delta = static_cast<double>(hypotheses[k].size()) - static_cast<double>(references[k].size());
    const double penalty = std::exp(-delta * delta / (2.0 * kSigma * kSigma));
    double score = 0.0;
    for (int n = 0; n < 4; ++n) {
      double dot = 0.0;
      for (const auto& [g, x] : h.w[n]) {
        const auto it = r.w[n].find(g);
        if (it != r.w[n].end()) dot += std::min(x, it->second) * it->second;
      }
      if (h.norm[n] != 0.0 && r.norm[n] != 0.0) dot /= h.norm[n] * r.norm[n];
      score += dot * penalty;
    }
    total += score / 4.0 * 10.0;
  }
  return total / static_cast<double>(hypotheses.size());
}

EvalReport evaluate(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references) {
  check_pairs(hypotheses, references, "evaluate");
  EvalReport r;
  r.bleu4 = bleu4(hypotheses, references);
  r.dist1 = distinct_n(hypotheses, 1);
  r.dist2 = distinct_n(hypotheses, 2);
  r.rouge_l = rouge_l(hypotheses, references);
  r.cider = 100.0 * cider(hypotheses, references);
  r.n_examples = hypotheses.size();
  return r;
}

nlohmann::ordered_json EvalReport::to_json() const {
  return {{"bleu4", bleu4},     {"dist1", dist1}, {"dist2", dist2},
          {"rouge_l", rouge_l}, {"cider", cider}, {"n_examples", n_examples},
          {"distinct", "corpus-level"}};
}

std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t width = 5;
  for (const auto& [label, r] : rows) width = std::max(width, label.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %8s %8s %8s %8s %8s %6s\n", static_cast<int>(width), "model", "B-4",
                "Dist-1", "Dist-2", "R-L", "CIDEr", "n");
  out += buf;
  for (const auto& [label, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %8.2f %8.2f %8.2f %8.2f %8.2f %6zu\n", static_cast<int>(width),
                  label.c_str(), r.bleu4, r.dist1, r.dist2, r.rouge_l, r.cider, r.n_examples);
    out += buf;
  }
  return out;
}

std::string EvalReport::table(const std::string& label) const {
  return report_table({{label.empty() ? "ectg" : label, *this}});
}

}  // namespace ectg
