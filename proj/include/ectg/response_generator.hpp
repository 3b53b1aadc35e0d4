#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ectg/nn/checkpoint.hpp"
#include "ectg/nn/layers.hpp"
#include "ectg/vocab.hpp"

namespace ectg {

struct GeneratorConfig {
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t ff_mult = 4;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t max_src_len = 256;
  std::size_t max_len = 32;
  double dropout = 0.0;
  bool copy = true;  // false: the gate is fixed at 0 (generation only)
};

/// Encoder input [CLS] u1 [SEP] ... un [SEP] concepts, plus the copy map.
struct GeneratorInput {
  std::vector<int> ids;         // encoder ids; out-of-vocabulary tokens are <unk>
  std::vector<int> source_ext;  // extended id of every source position
  std::vector<std::string> oov; // extended id |V| + i is oov[i]
  std::size_t base_size = 0;
  std::size_t ext_size() const { return base_size + oov.size(); }
};

/// Drops the oldest utterances first (then the front of the oldest survivor)
/// until the sequence fits; concepts are never dropped.
GeneratorInput build_input(const Vocab& vocab, const std::vector<std::vector<std::string>>& context,
                           const std::vector<std::string>& concepts, std::size_t max_src_len = 256);

/// Extended id of a token: base id, else its source OOV slot, else <unk>.
int extended_id(const Vocab& vocab, const GeneratorInput& in, const std::string& token);
/// Reference tokens mapped to extended ids, with <eos> appended.
std::vector<int> target_ids(const Vocab& vocab, const GeneratorInput& in,
                            const std::vector<std::string>& reference, bool allow_copy = true);
/// Reference tokens that end up as <unk> targets (callers warn about these).
std::vector<std::string> unknown_reference_tokens(const Vocab& vocab, const GeneratorInput& in,
                                                  const std::vector<std::string>& reference,
                                                  bool allow_copy = true);

enum class GateMode { kLearned, kGenerateOnly, kCopyOnly };

struct CopyDistribution {
  nn::Tensor attention;  // T x S, head-averaged final-layer cross-attention
  nn::Tensor gate;       // T x 1, copy probability
  nn::Tensor vocab;      // T x |V|, generation distribution
  nn::Tensor mixture;    // T x ext, final word distribution
};

/// P(w) = gate * (A M_src) + (1 - gate) * [P_vocab, 0...].
nn::Tensor mix_distribution(const nn::Tensor& attention, const nn::Tensor& gate,
                            const nn::Tensor& vocab_dist, const std::vector<int>& source_ext,
                            std::size_t ext_size);

struct DecodeOptions {
  std::size_t top_k = 0;  // 0 = greedy
  std::uint64_t seed = 1;
};

struct Generation {
  std::vector<std::string> tokens;
  std::vector<bool> copied;  // copy term outweighed the generation term
};

class GeneratorModel {
 public:
  GeneratorModel(Vocab vocab, GeneratorConfig cfg, std::uint64_t seed);

  const Vocab& vocab() const { return vocab_; }
  const GeneratorConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  nn::Tensor encode(const GeneratorInput& in, const nn::ForwardMode& mode = {}) const;
  /// Distributions for every prefix position; `prefix` holds extended ids and starts with <bos>.
  CopyDistribution distribution(const GeneratorInput& in, const nn::Tensor& memory,
                                const std::vector<int>& prefix, const nn::ForwardMode& mode = {},
                                GateMode gate = GateMode::kLearned) const;
  CopyDistribution distribution(const GeneratorInput& in, const std::vector<int>& prefix,
                                GateMode gate = GateMode::kLearned) const;

  /// Teacher-forced mean -log P(reference_t), <eos> included.
  nn::Tensor loss(const GeneratorInput& in, const std::vector<std::string>& reference,
                  const nn::ForwardMode& mode = {}) const;

  Generation generate(const GeneratorInput& in, std::size_t max_len,
                      const DecodeOptions& opt = {}) const;

  nn::Checkpoint to_checkpoint(std::uint64_t seed) const;
  static GeneratorModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  GateMode gate_mode() const { return cfg_.copy ? GateMode::kLearned : GateMode::kGenerateOnly; }

  Vocab vocab_;
  GeneratorConfig cfg_;
  nn::ParameterSet params_;
  nn::Tensor token_emb_;  // shared by encoder, decoder input and output projection
  nn::TransformerEncoder encoder_;
  nn::TransformerDecoder decoder_;
  nn::Linear gate_;
};

struct GeneratorExample {
  std::string id;
  GeneratorInput input;
  std::vector<std::string> reference;
};

/// Context utterances [0, response_index) plus `concepts`; the reference is that turn's tokens.
GeneratorExample make_generator_example(const Vocab& vocab, const Dialogue& dialogue,
                                        std::size_t response_index,
                                        const std::vector<std::string>& concepts,
                                        std::size_t max_src_len = 256);

struct GeneratorTrainOptions {
  std::size_t steps = 1000;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t batch_size = 0;  // 0 = full batch
};

struct GeneratorTrainReport {
  std::size_t steps = 0;
  double last_loss = 0.0;
};

/// `stop` is polled after each update; returning true ends training.
GeneratorTrainReport train_generator(GeneratorModel& model, const std::vector<GeneratorExample>& examples,
                                     const GeneratorTrainOptions& opt,
                                     const std::function<void(std::size_t, double)>& on_step = {},
                                     const std::function<bool(std::size_t)>& stop = {});

/// Mean teacher-forced loss over examples (no gradients).
double mean_generator_loss(const GeneratorModel& model, const std::vector<GeneratorExample>& examples);

/// Fraction of examples whose greedy output equals the reference.
double exact_match_rate(const GeneratorModel& model, const std::vector<GeneratorExample>& examples);

}  // namespace ectg
