#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ectg/nn/layers.hpp"

namespace ectg {

struct EncoderConfig {
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t ff_mult = 4;
  std::size_t utterance_layers = 2;
  std::size_t context_layers = 1;
  std::size_t d_gru = 768;
  double dropout = 0.0;
};

struct ConceptFlow {
  std::vector<nn::Tensor> states;  // hs_0 .. hs_n, each 1 x d_gru; hs_0 is zero
  std::vector<nn::Tensor> alphas;  // per utterance, 1 x m_i; undefined when m_i = 0
};

/// GRU over concept sets. For utterance i the input is the attention-weighted
/// sum of its concept embeddings, weights softmax_j(hs_{i-1} W e_ij); an empty
/// set feeds a zero vector. `transition` is d_gru x d, `embeddings` one row per id.
ConceptFlow concept_flow(const nn::GruCell& gru, const nn::Tensor& transition,
                         const nn::Tensor& embeddings,
                         const std::vector<std::vector<std::size_t>>& concept_sets);

struct ContextEncoding {
  nn::Tensor h_cls;     // n x d, one row per utterance
  nn::Tensor context;   // n x d, after the cross-utterance encoder
  ConceptFlow flow;
  const nn::Tensor& last_flow() const { return flow.states.back(); }
};

/// Utterance encoder ([CLS] + tokens), cross-utterance encoder and concept flow.
class DialogueEncoder {
 public:
  DialogueEncoder() = default;
  DialogueEncoder(nn::ParameterSet& params, const std::string& prefix, std::size_t vocab_size,
                  const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }
  const nn::Tensor& token_embeddings() const { return token_emb_; }

  /// Position-0 state of the utterance encoder over [CLS] + ids, 1 x d.
  nn::Tensor encode_utterance(const std::vector<int>& ids, const nn::ForwardMode& mode = {}) const;
  /// Self-attention over utterance vectors with positional encodings, n x d.
  nn::Tensor encode_context(const nn::Tensor& h_cls, const nn::ForwardMode& mode = {}) const;
  ConceptFlow flow(const nn::Tensor& embeddings,
                   const std::vector<std::vector<std::size_t>>& concept_sets) const;

  ContextEncoding encode(const std::vector<std::vector<int>>& utterances,
                         const nn::Tensor& concept_embeddings,
                         const std::vector<std::vector<std::size_t>>& concept_sets,
                         const nn::ForwardMode& mode = {}) const;

 private:
  EncoderConfig cfg_;
  nn::Tensor token_emb_;
  nn::TransformerEncoder utterance_;
  nn::TransformerEncoder context_;
  nn::GruCell gru_;
  nn::Tensor transition_;  // d_gru x d
};

/// Token embeddings scaled by sqrt(d) plus sinusoidal positions.
nn::Tensor embed_sequence(const nn::Tensor& table, const std::vector<int>& ids);

}  // namespace ectg
