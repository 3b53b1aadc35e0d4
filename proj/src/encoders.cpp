#include "ectg/encoders.hpp"

#include <cmath>

#include "ectg/vocab.hpp"

namespace ectg {

using nn::Tensor;

ConceptFlow concept_flow(const nn::GruCell& gru, const Tensor& transition, const Tensor& embeddings,
                         const std::vector<std::vector<std::size_t>>& concept_sets) {
  ConceptFlow out;
  out.states.push_back(Tensor::zeros(1, gru.hidden()));
  for (const auto& set : concept_sets) {
    const Tensor& prev = out.states.back();
    Tensor input;
    Tensor alpha;
    if (set.empty()) {
      input = Tensor::zeros(1, embeddings.cols());
    } else {
      const Tensor e = nn::embedding(embeddings, std::vector<int>(set.begin(), set.end()));
      const Tensor scores = nn::matmul(nn::matmul(prev, transition), nn::transpose(e));
      alpha = nn::softmax(scores);
      input = nn::matmul(alpha, e);
    }
    out.alphas.push_back(alpha);
    out.states.push_back(gru(input, prev));
  }
  return out;
}

Tensor embed_sequence(const Tensor& table, const std::vector<int>& ids) {
  const double s = std::sqrt(static_cast<double>(table.cols()));
  return nn::add(nn::scale(nn::embedding(table, ids), s),
                 nn::positional_encoding(ids.size(), table.cols()));
}

DialogueEncoder::DialogueEncoder(nn::ParameterSet& params, const std::string& prefix,
                                 std::size_t vocab_size, const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  token_emb_ = params.xavier(prefix + ".token_emb", vocab_size, cfg.d_model, rng);
  utterance_ = nn::TransformerEncoder(params, prefix + ".utterance",
                                      {.d_model = cfg.d_model, .heads = cfg.heads,
                                       .ff_mult = cfg.ff_mult, .layers = cfg.utterance_layers},
                                      rng);
  context_ = nn::TransformerEncoder(params, prefix + ".context",
                                    {.d_model = cfg.d_model, .heads = cfg.heads,
                                     .ff_mult = cfg.ff_mult, .layers = cfg.context_layers},
                                    rng);
  gru_ = nn::GruCell(params, prefix + ".flow_gru", cfg.d_model, cfg.d_gru, rng);
  transition_ = params.xavier(prefix + ".flow_transition", cfg.d_gru, cfg.d_model, rng);
}

Tensor DialogueEncoder::encode_utterance(const std::vector<int>& ids,
                                         const nn::ForwardMode& mode) const {
  std::vector<int> seq;
  seq.reserve(ids.size() + 1);
  seq.push_back(Vocab::kCls);
  seq.insert(seq.end(), ids.begin(), ids.end());
  const Tensor h = utterance_(nn::apply_dropout(embed_sequence(token_emb_, seq), mode), mode);
  return nn::slice_rows(h, 0, 1);
}

Tensor DialogueEncoder::encode_context(const Tensor& h_cls, const nn::ForwardMode& mode) const {
  if (h_cls.rows() == 0) throw Error("encode_context: no utterances");
  const Tensor x = nn::add(h_cls, nn::positional_encoding(h_cls.rows(), cfg_.d_model));
  return context_(nn::apply_dropout(x, mode), mode);
}

ConceptFlow DialogueEncoder::flow(const Tensor& embeddings,
                                  const std::vector<std::vector<std::size_t>>& concept_sets) const {
  return concept_flow(gru_, transition_, embeddings, concept_sets);
}

ContextEncoding DialogueEncoder::encode(const std::vector<std::vector<int>>& utterances,
                                        const Tensor& concept_embeddings,
                                        const std::vector<std::vector<std::size_t>>& concept_sets,
                                        const nn::ForwardMode& mode) const {
  if (utterances.empty()) throw Error("encode: empty context");
  if (concept_sets.size() != utterances.size()) {
    throw Error("encode: one concept set per utterance is required");
  }
  std::vector<Tensor> rows;
  rows.reserve(utterances.size());
  for (const auto& u : utterances) rows.push_back(encode_utterance(u, mode));
  ContextEncoding out;
  out.h_cls = nn::concat_rows(rows);
  out.context = encode_context(out.h_cls, mode);
  out.flow = flow(concept_embeddings, concept_sets);
  return out;
}

}  // namespace ectg
