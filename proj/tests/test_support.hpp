#pragma once

#include <random>
#include <string>
#include <vector>

#include "ectg/concept_predictor.hpp"
#include "ectg/corpus.hpp"
#include "ectg/ect_graph.hpp"
#include "ectg/rng.hpp"
#include "ectg/vocab.hpp"

namespace ectg::testing {

inline const std::string kToyPath = std::string(ECTG_FIXTURE_DIR) + "/toy_corpus.jsonl";
inline const std::string kGirlfriendPath = std::string(ECTG_FIXTURE_DIR) + "/girlfriend_mini.jsonl";

inline nn::Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return nn::Tensor::from(r, c, std::move(v));
}

struct Toy {
  std::vector<Dialogue> dialogues;
  Vocab vocab;
  EctGraph graph;
  std::vector<ConceptExample> examples;  // every listener turn
};

inline Toy load_toy(const std::string& path = kToyPath, std::uint64_t min_count = 2) {
  Toy t;
  t.dialogues = load_corpus(path);
  t.vocab = build_vocab(t.dialogues, 1);
  t.graph = build_graph(collect_transitions(t.dialogues, SpanSource{}), 0.0, min_count);
  for (const auto& ex : make_exchanges(t.dialogues)) {
    t.examples.push_back(make_concept_example(t.vocab, t.graph, SpanSource{}, *ex.dialogue,
                                              ex.response_index, 5));
  }
  return t;
}

inline ConceptModelConfig tiny_concept_config() {
  ConceptModelConfig c;
  c.encoder = {.d_model = 8, .heads = 2, .ff_mult = 2, .utterance_layers = 1, .context_layers = 1, .d_gru = 6};
  c.decoder_layers = 2;
  return c;
}

}  // namespace ectg::testing
