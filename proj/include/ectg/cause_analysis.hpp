#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ectg/corpus.hpp"
#include "ectg/nn/checkpoint.hpp"
#include "ectg/nn/layers.hpp"
#include "ectg/vocab.hpp"

namespace ectg {

struct SpanModelConfig {
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ff_mult = 4;
  double dropout = 0.0;
};

struct CauseSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  double score = 0.0;   // log p_start + log p_end
};

/// Emotion-cause span extractor: a self-attention encoder over
/// tokens ⊕ [SEP] ⊕ emotion, followed by start/end pointer attention.
class SpanModel {
 public:
  SpanModel(Vocab vocab, std::vector<std::string> emotions, SpanModelConfig cfg, std::uint64_t seed);

  const Vocab& vocab() const { return vocab_; }
  const std::vector<std::string>& emotions() const { return emotions_; }
  const SpanModelConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// Throws an Error that lists every known label when `label` is unknown.
  int emotion_id(const std::string& label) const;

  /// Hidden states, (len(tokens) + 2) x d_model; the last two rows are [SEP] and the emotion.
  nn::Tensor encode(const std::vector<int>& token_ids, int emotion,
                    const nn::ForwardMode& mode = {}) const;

  /// Start-pointer logits over the first n rows of `hidden` (1 x n).
  nn::Tensor start_logits(const nn::Tensor& hidden, std::size_t n) const;
  /// End-pointer logits conditioned on the row of `start` (1 x n, unmasked).
  nn::Tensor end_logits(const nn::Tensor& hidden, std::size_t n, std::size_t start) const;

  nn::Checkpoint to_checkpoint(std::uint64_t seed) const;
  static SpanModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  Vocab vocab_;
  std::vector<std::string> emotions_;
  SpanModelConfig cfg_;
  nn::ParameterSet params_;
  nn::Tensor token_emb_;
  nn::Tensor emotion_emb_;
  nn::TransformerEncoder encoder_;
  nn::Linear start_proj_;
  nn::Tensor start_v_;
  nn::Linear end_proj_;
  nn::Linear end_cond_;
  nn::Tensor end_v_;
};

/// encode() for string tokens and a label.
nn::Tensor encode_with_emotion(const SpanModel& model, const std::vector<std::string>& tokens,
                               const std::string& emotion);

struct SpanDistributions {
  nn::Tensor start;  // 1 x n
  nn::Tensor end;    // 1 x n, zero before the conditioning start
};

/// Pointer distributions over n utterance positions; the end pointer is
/// conditioned on `start` and masked to positions >= start.
SpanDistributions span_distributions(const SpanModel& model, const nn::Tensor& hidden,
                                     std::size_t n, std::size_t start);

/// Best span: argmax start, then argmax end >= start; ties go to the smaller index.
CauseSpan predict_span(const SpanModel& model, const nn::Tensor& hidden, std::size_t n);

/// -log start[gold.start] - log end[gold.end]. Throws when the gold index is
/// outside the distribution or sits on a masked (zero-probability) position.
nn::Tensor span_loss(const nn::Tensor& start_dist, const nn::Tensor& end_dist, const TokenSpan& gold);
double span_loss(std::span<const double> start_dist, std::span<const double> end_dist,
                 const TokenSpan& gold);

struct SpanExample {
  std::vector<int> tokens;
  int emotion = 0;
  std::vector<TokenSpan> gold;  // one is sampled per step when several exist
};

/// Every utterance of the corpus that carries gold spans.
std::vector<SpanExample> make_span_examples(const SpanModel& model,
                                            const std::vector<Dialogue>& dialogues);

struct TrainOptions {
  std::size_t steps = 2000;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t eval_every = 25;
};

struct SpanTrainReport {
  std::size_t steps = 0;
  double last_loss = 0.0;
  double exact_match = 0.0;
};

/// Fraction of examples whose predicted span equals one of their gold spans.
double span_exact_match(const SpanModel& model, const std::vector<SpanExample>& examples);

/// Adam on the mean span loss. Stops early once exact match reaches 1 when
/// `stop_when_exact` is set. `on_step(step, loss)` is called after each update.
SpanTrainReport train_span_model(SpanModel& model, const std::vector<SpanExample>& examples,
                                 const TrainOptions& opt, bool stop_when_exact = false,
                                 const std::function<void(std::size_t, double)>& on_step = {});

/// Where cause spans come from when turning utterances into concepts.
struct SpanSource {
  bool use_gold = true;               // gold spans take precedence when present
  const SpanModel* model = nullptr;   // used for utterances without gold spans
  bool whole_utterance = false;       // ablation: every utterance is one span

  std::vector<TokenSpan> spans(const Dialogue& d, std::size_t utterance) const;
};

/// Keywords of every cause span of an utterance, first occurrence order, no duplicates.
std::vector<std::string> utterance_concepts(const SpanSource& source, const Dialogue& d,
                                            std::size_t utterance);

}  // namespace ectg
