#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ectg/cause_analysis.hpp"
#include "ectg/ect_graph.hpp"
#include "ectg/encoders.hpp"
#include "ectg/nn/checkpoint.hpp"
#include "ectg/nn/layers.hpp"
#include "ectg/rng.hpp"
#include "ectg/vocab.hpp"

namespace ectg {

// Projections of the two-level graph attention (no biases, input x out).
struct GraphAttentionWeights {
  nn::Tensor head_query;  // [hdc; hs] -> a
  nn::Tensor pair_key;    // [e_head; e_tail] -> a
  nn::Tensor tail_query;  // [hdc; hs; e_head] -> a
  nn::Tensor tail_key;    // e_tail -> a
};

/// Candidates under one retrieved head; ids are rows of the concept embedding table.
struct CandidateSet {
  std::size_t head = 0;
  std::vector<std::size_t> tails;
  std::vector<bool> masked;  // same length as tails; masked tails get probability 0
};

struct GraphAttention {
  nn::Tensor head_weights;               // 1 x J
  std::vector<nn::Tensor> tail_weights;  // per head, 1 x K_j
  nn::Tensor joint;                      // 1 x sum K_j, head-major
  std::vector<std::size_t> joint_tail;   // tail id of every joint column
};

/// Tail weights come first (they feed the head scores):
///   tail_jk = softmax_k((x_j Wtq) . (e_jk Wtk)),  x_j = [hdc; hs; e_j]
///   head_j  = softmax_j(([hdc; hs] Whq) . ((sum_k tail_jk [e_j; e_jk]) Wpk))
///   joint   = head_j * tail_jk
/// Throws when `candidates` is empty.
GraphAttention graph_attend(const GraphAttentionWeights& w, const nn::Tensor& hdc,
                            const nn::Tensor& hs, const std::vector<CandidateSet>& candidates,
                            const nn::Tensor& embeddings);

struct ConceptModelConfig {
  EncoderConfig encoder;
  std::size_t decoder_layers = 2;
  std::size_t max_concepts = 5;
  double concept_weight = 1.0;  // r in L_g + r * L_c
  bool strict = false;          // unreachable gold concepts raise instead of being skipped
};

/// One (context, response) pair prepared for the concept predictor.
struct ConceptExample {
  std::string id;
  std::vector<std::vector<int>> context;               // token ids per utterance
  std::vector<std::vector<std::size_t>> concept_sets;  // vertex ids per utterance
  std::vector<std::size_t> gold;                       // response concepts, first occurrence order
  std::vector<int> response;                           // response token ids
};

/// Graph vertices among the span keywords of utterance i, deduplicated, at most `cap`.
std::vector<std::size_t> concept_set(const EctGraph& graph, const SpanSource& source,
                                     const Dialogue& d, std::size_t utterance, std::size_t cap);

/// Context is utterances[0, response_index), the response utterances[response_index].
ConceptExample make_concept_example(const Vocab& vocab, const EctGraph& graph,
                                    const SpanSource& source, const Dialogue& d,
                                    std::size_t response_index, std::size_t cap);

/// Gold concepts that are tails of some subgraph of the last context
/// utterance, in gold order. Only these can ever be decoded.
std::vector<std::size_t> reachable_gold(const EctGraph& graph, const ConceptExample& ex);

class ConceptModel {
 public:
  ConceptModel(Vocab vocab, EctGraph graph, ConceptModelConfig cfg, std::uint64_t seed);

  const Vocab& vocab() const { return vocab_; }
  const EctGraph& graph() const { return graph_; }
  const ConceptModelConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// Embedding rows: graph vertices, then the begin-of-concepts and STOP symbols.
  std::size_t begin_id() const { return graph_.vertex_count(); }
  std::size_t stop_id() const { return graph_.vertex_count() + 1; }
  const nn::Tensor& concept_embeddings() const { return concept_emb_; }
  const GraphAttentionWeights& attention_weights() const { return att_; }
  const DialogueEncoder& encoder() const { return encoder_; }

  ContextEncoding encode(const ConceptExample& ex, const nn::ForwardMode& mode = {}) const;
  /// Decoder over [BEGIN, prefix...] with cross-attention into the context encoding.
  nn::DecoderResult decode(const std::vector<std::size_t>& prefix, const ContextEncoding& ctx,
                           const nn::ForwardMode& mode = {}) const;
  /// Subgraphs of the last context utterance, with STOP appended under each
  /// head and already decoded tails masked.
  std::vector<CandidateSet> candidates(const ConceptExample& ex,
                                       const std::vector<std::size_t>& decoded) const;
  /// Per-slot log-probabilities over the vocabulary, (partial.size() + 1) x |V|.
  nn::Tensor insertion_log_probs(const nn::Tensor& states, const std::vector<int>& partial,
                                 const nn::ForwardMode& mode = {}) const;
  /// Decoder states fed to the insertion head (the penultimate layer).
  static const nn::Tensor& insertion_states(const nn::DecoderResult& dec);

  nn::Checkpoint to_checkpoint(std::uint64_t seed) const;
  static ConceptModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  Vocab vocab_;
  EctGraph graph_;
  ConceptModelConfig cfg_;
  nn::ParameterSet params_;
  DialogueEncoder encoder_;
  nn::Tensor concept_emb_;
  nn::TransformerDecoder decoder_;
  GraphAttentionWeights att_;
  nn::Linear slot_proj_;
  nn::MultiHeadAttention slot_attn_;
  nn::LayerNorm slot_norm_;
};

struct NllResult {
  nn::Tensor loss;          // mean over scored steps; constant 0 when none scored
  std::size_t scored = 0;
  std::size_t skipped = 0;  // gold concept not among the candidates
};

/// Mean over steps of -log sum_{columns with tail == gold_t} joint_t.
NllResult concept_nll(const std::vector<GraphAttention>& steps, const std::vector<std::size_t>& gold,
                      bool strict = false);

struct InsertionTargets {
  std::vector<int> partial;                    // kept tokens, in order
  std::vector<std::vector<int>> slot_targets;  // missing tokens per slot, partial.size() + 1 slots
};

/// Splits `response` into a kept subsequence and the tokens missing in each slot.
InsertionTargets insertion_targets(const std::vector<int>& response, const std::vector<bool>& keep);
/// Keeps each token with probability 1/2.
std::vector<bool> sample_keep_mask(std::size_t n, Rng& rng);

/// 1/(k+1) sum_slots [ sum_{missing} -log p(tok) / |missing| ], or -log p(<eos>)
/// for a slot with nothing missing. Throws on an empty response.
nn::Tensor insertion_loss(const nn::Tensor& slot_log_probs, const InsertionTargets& targets);

/// L_g + r * L_c.
nn::Tensor combined_loss(const nn::Tensor& l_g, const nn::Tensor& l_c, double r);

struct ConceptLosses {
  nn::Tensor total;
  nn::Tensor l_c;
  nn::Tensor l_g;
  std::size_t scored = 0;
  std::size_t skipped = 0;
};

/// Teacher-forced losses of one example; `rng` samples the insertion partial.
ConceptLosses concept_losses(const ConceptModel& model, const ConceptExample& ex, Rng& rng,
                             const nn::ForwardMode& mode = {});
/// Mean losses over a batch.
ConceptLosses batch_concept_losses(const ConceptModel& model,
                                   const std::vector<const ConceptExample*>& batch, Rng& rng,
                                   const nn::ForwardMode& mode = {});

/// Greedy decoding until STOP or `max_concepts`; empty when nothing is retrievable.
std::vector<std::string> predict_concepts(const ConceptModel& model, const ConceptExample& ex,
                                          std::size_t max_concepts);

struct ConceptTrainOptions {
  std::size_t steps = 3000;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t batch_size = 0;  // 0 = full batch
  double stop_below = -1.0;    // stop once the step's L_c falls below this
};

struct ConceptStep {
  std::size_t step = 0;
  double total = 0.0;
  double l_c = 0.0;
  double l_g = 0.0;
};

struct ConceptTrainReport {
  std::size_t steps = 0;
  ConceptStep last;
};

ConceptTrainReport train_concept_model(ConceptModel& model, const std::vector<ConceptExample>& examples,
                                       const ConceptTrainOptions& opt,
                                       const std::function<void(const ConceptStep&)>& on_step = {});

}  // namespace ectg
