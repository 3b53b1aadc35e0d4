#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "ectg/nn/tensor.hpp"

namespace ectg {

using Sentence = std::vector<std::string>;

class MetricError : public Error {
 public:
  using Error::Error;
};

/// Corpus BLEU-4 with one reference per hypothesis, in percent. Zero
/// precisions (and orders with no n-grams at all) are floored at epsilon.
double bleu4(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references,
             double epsilon = 1e-9);

/// Distinct n-grams over all hypotheses / total n-grams, in percent (corpus level).
double distinct_n(const std::vector<Sentence>& hypotheses, std::size_t n);

/// LCS F-measure with beta = 1, in percent. An empty reference scores 0.
double rouge_l(const Sentence& hypothesis, const Sentence& reference);
/// Mean of rouge_l over pairs.
double rouge_l(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references);

/// CIDEr-D (n = 1..4, sigma = 6, clipped tf-idf, x10), averaged over examples.
/// Document frequencies come from the references; needs at least two examples.
double cider(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references);

struct EvalReport {
  double bleu4 = 0.0;
  double dist1 = 0.0;
  double dist2 = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;  // CIDEr x 100
  std::size_t n_examples = 0;

  nlohmann::ordered_json to_json() const;
  /// Aligned table: B-4, Dist-1, Dist-2, R-L, CIDEr.
  std::string table(const std::string& label = "") const;
};

EvalReport evaluate(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references);

/// Several labelled reports as one table (header printed once).
std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace ectg
