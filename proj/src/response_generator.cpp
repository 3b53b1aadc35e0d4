#include "ectg/response_generator.hpp"

#include <algorithm>
#include <cmath>

#include "ectg/encoders.hpp"
#include "ectg/nn/optim.hpp"
#include "ectg/rng.hpp"

namespace ectg {

using nn::Tensor;

GeneratorInput build_input(const Vocab& vocab, const std::vector<std::vector<std::string>>& context,
                           const std::vector<std::string>& concepts, std::size_t max_src_len) {
  std::size_t first = 0;
  std::size_t skip = 0;  // tokens cut from the front of the oldest kept utterance
  const auto length = [&] {
    std::size_t n = 1 + concepts.size();
    for (std::size_t i = first; i < context.size(); ++i) n += context[i].size() + 1;
    return n - skip;
  };
  if (context.empty()) throw Error("build_input: empty context");
  while (length() > max_src_len && first + 1 < context.size()) ++first;
  if (length() > max_src_len) {
    const std::size_t fixed = length() - context[first].size();
    if (fixed > max_src_len) throw Error("build_input: max_src_len is too small for the concepts");
    skip = context[first].size() - (max_src_len - fixed);
  }

  GeneratorInput in;
  in.base_size = vocab.size();
  const auto push = [&](const std::string& tok) {
    const int id = vocab.id(tok);
    in.ids.push_back(id);
    if (vocab.contains(tok)) {
      in.source_ext.push_back(id);
      return;
    }
    auto it = std::find(in.oov.begin(), in.oov.end(), tok);
    if (it == in.oov.end()) {
      in.oov.push_back(tok);
      it = in.oov.end() - 1;
    }
    in.source_ext.push_back(static_cast<int>(in.base_size + static_cast<std::size_t>(it - in.oov.begin())));
  };
  const auto push_special = [&](int id) {
    in.ids.push_back(id);
    in.source_ext.push_back(id);
  };
  push_special(Vocab::kCls);
  for (std::size_t i = first; i < context.size(); ++i) {
    for (std::size_t k = (i == first ? skip : 0); k < context[i].size(); ++k) push(context[i][k]);
    push_special(Vocab::kSep);
  }
  for (const auto& c : concepts) push(c);
  return in;
}

int extended_id(const Vocab& vocab, const GeneratorInput& in, const std::string& token) {
  if (vocab.contains(token)) return vocab.id(token);
  const auto it = std::find(in.oov.begin(), in.oov.end(), token);
  if (it != in.oov.end()) return static_cast<int>(in.base_size + static_cast<std::size_t>(it - in.oov.begin()));
  return Vocab::kUnk;
}

std::vector<int> target_ids(const Vocab& vocab, const GeneratorInput& in,
                            const std::vector<std::string>& reference, bool allow_copy) {
  std::vector<int> out;
  for (const auto& t : reference) {
    const int id = extended_id(vocab, in, t);
    out.push_back(!allow_copy && id >= static_cast<int>(in.base_size) ? Vocab::kUnk : id);
  }
  out.push_back(Vocab::kEos);
  return out;
}

std::vector<std::string> unknown_reference_tokens(const Vocab& vocab, const GeneratorInput& in,
                                                  const std::vector<std::string>& reference,
                                                  bool allow_copy) {
  std::vector<std::string> out;
  for (const auto& t : reference) {
    const int id = extended_id(vocab, in, t);
    if ((id == Vocab::kUnk && t != vocab.token(Vocab::kUnk)) ||
        (!allow_copy && id >= static_cast<int>(in.base_size))) {
      out.push_back(t);
    }
  }
  return out;
}

Tensor mix_distribution(const Tensor& attention, const Tensor& gate, const Tensor& vocab_dist,
                        const std::vector<int>& source_ext, std::size_t ext_size) {
  if (attention.cols() != source_ext.size()) {
    throw nn::ShapeError("mix_distribution: attention over " + std::to_string(attention.cols()) +
                         " positions for " + std::to_string(source_ext.size()) + " source tokens");
  }
  std::vector<double> map(source_ext.size() * ext_size, 0.0);
  for (std::size_t s = 0; s < source_ext.size(); ++s) {
    map[s * ext_size + static_cast<std::size_t>(source_ext[s])] = 1.0;
  }
  const Tensor copy = nn::matmul(attention, Tensor::from(source_ext.size(), ext_size, std::move(map)));
  Tensor gen = vocab_dist;
  if (ext_size > vocab_dist.cols()) {
    gen = nn::concat_cols({vocab_dist, Tensor::zeros(vocab_dist.rows(), ext_size - vocab_dist.cols())});
  }
  const Tensor keep = nn::add_scalar(nn::scale(gate, -1.0), 1.0);
  return nn::add(nn::scale_rows(copy, gate), nn::scale_rows(gen, keep));
}

GeneratorModel::GeneratorModel(Vocab vocab, GeneratorConfig cfg, std::uint64_t seed)
    : vocab_(std::move(vocab)), cfg_(cfg) {
  Rng rng(seed);
  const nn::TransformerShape enc{.d_model = cfg_.d_model, .heads = cfg_.heads,
                                 .ff_mult = cfg_.ff_mult, .layers = cfg_.encoder_layers};
  nn::TransformerShape dec = enc;
  dec.layers = cfg_.decoder_layers;
  token_emb_ = params_.xavier("gen.token_emb", vocab_.size(), cfg_.d_model, rng);
  encoder_ = nn::TransformerEncoder(params_, "gen.encoder", enc, rng);
  decoder_ = nn::TransformerDecoder(params_, "gen.decoder", dec, rng);
  gate_ = nn::Linear(params_, "gen.copy_gate", cfg_.d_model, 1, rng);
}

Tensor GeneratorModel::encode(const GeneratorInput& in, const nn::ForwardMode& mode) const {
  if (in.ids.empty()) throw Error("generator: empty input");
  return encoder_(nn::apply_dropout(embed_sequence(token_emb_, in.ids), mode), mode);
}

CopyDistribution GeneratorModel::distribution(const GeneratorInput& in, const Tensor& memory,
                                              const std::vector<int>& prefix,
                                              const nn::ForwardMode& mode, GateMode gate) const {
  if (prefix.empty() || prefix[0] != Vocab::kBos) throw Error("generator: prefix must start with <bos>");
  std::vector<int> ids = prefix;
  for (auto& id : ids) {
    if (id >= static_cast<int>(vocab_.size())) id = Vocab::kUnk;
  }
  const nn::DecoderResult dec = decoder_(nn::apply_dropout(embed_sequence(token_emb_, ids), mode), memory, mode);
  CopyDistribution out;
  out.attention = dec.cross_weights;
  out.vocab = nn::softmax(nn::matmul(dec.output, nn::transpose(token_emb_)));
  switch (gate) {
    case GateMode::kLearned:
      out.gate = nn::sigmoid(gate_(dec.output));
      break;
    case GateMode::kGenerateOnly:
      out.gate = Tensor::zeros(prefix.size(), 1);
      break;
    case GateMode::kCopyOnly:
      out.gate = nn::add_scalar(Tensor::zeros(prefix.size(), 1), 1.0);
      break;
  }
  out.mixture = mix_distribution(out.attention, out.gate, out.vocab, in.source_ext, in.ext_size());
  return out;
}

CopyDistribution GeneratorModel::distribution(const GeneratorInput& in, const std::vector<int>& prefix,
                                              GateMode gate) const {
  return distribution(in, encode(in), prefix, {}, gate);
}

Tensor GeneratorModel::loss(const GeneratorInput& in, const std::vector<std::string>& reference,
                            const nn::ForwardMode& mode) const {
  const std::vector<int> targets = target_ids(vocab_, in, reference, cfg_.copy);
  std::vector<int> prefix{Vocab::kBos};
  prefix.insert(prefix.end(), targets.begin(), targets.end() - 1);
  const CopyDistribution d = distribution(in, encode(in, mode), prefix, mode, gate_mode());
  std::vector<std::pair<std::size_t, std::size_t>> at;
  for (std::size_t t = 0; t < targets.size(); ++t) at.emplace_back(t, static_cast<std::size_t>(targets[t]));
  return nn::scale(nn::mean(nn::log(nn::gather(d.mixture, at))), -1.0);
}

Generation GeneratorModel::generate(const GeneratorInput& in, std::size_t max_len,
                                    const DecodeOptions& opt) const {
  nn::NoGradGuard guard;
  Rng rng(opt.seed);
  const Tensor memory = encode(in);
  std::vector<int> prefix{Vocab::kBos};
  Generation out;
  while (out.tokens.size() < max_len) {
    const CopyDistribution d = distribution(in, memory, prefix, {}, gate_mode());
    const std::size_t t = prefix.size() - 1;
    const std::size_t n = in.ext_size();
    const auto row = d.mixture.values().subspan(t * n, n);
    std::size_t pick = 0;
    if (opt.top_k == 0) {
      pick = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    } else {
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      const std::size_t k = std::min(opt.top_k, n);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](std::size_t a, std::size_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) total += row[order[i]];
      double u = rng.uniform() * total;
      pick = order[k - 1];
      for (std::size_t i = 0; i < k; ++i) {
        u -= row[order[i]];
        if (u <= 0.0) {
          pick = order[i];
          break;
        }
      }
    }
    if (pick == static_cast<std::size_t>(Vocab::kEos)) break;
    double copy_mass = 0.0;
    const auto att = d.attention.values().subspan(t * in.source_ext.size(), in.source_ext.size());
    for (std::size_t s = 0; s < att.size(); ++s) {
      if (static_cast<std::size_t>(in.source_ext[s]) == pick) copy_mass += att[s];
    }
    const double g = d.gate.values()[t];
    const double gen_mass = pick < d.vocab.cols() ? d.vocab.values()[t * d.vocab.cols() + pick] : 0.0;
    out.copied.push_back(g * copy_mass > (1.0 - g) * gen_mass);
    out.tokens.push_back(pick < vocab_.size() ? vocab_.token(static_cast<int>(pick)) : in.oov[pick - vocab_.size()]);
    prefix.push_back(static_cast<int>(pick));
  }
  return out;
}

nn::Checkpoint GeneratorModel::to_checkpoint(std::uint64_t seed) const {
  nn::Checkpoint c = nn::Checkpoint::capture(params_, seed);
  c.meta["kind"] = "generator";
  c.meta["vocab"] = vocab_.tokens();
  c.meta["model"] = {{"d_model", cfg_.d_model},
                     {"heads", cfg_.heads},
                     {"ff_mult", cfg_.ff_mult},
                     {"encoder_layers", cfg_.encoder_layers},
                     {"decoder_layers", cfg_.decoder_layers},
                     {"max_src_len", cfg_.max_src_len},
                     {"max_len", cfg_.max_len},
                     {"dropout", cfg_.dropout},
                     {"copy", cfg_.copy}};
  return c;
}

GeneratorModel GeneratorModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.meta.value("kind", "") != "generator") {
    throw nn::CheckpointError("checkpoint does not hold a generator");
  }
  const auto& m = ckpt.meta.at("model");
  GeneratorConfig cfg{.d_model = m.at("d_model"),
                      .heads = m.at("heads"),
                      .ff_mult = m.at("ff_mult"),
                      .encoder_layers = m.at("encoder_layers"),
                      .decoder_layers = m.at("decoder_layers"),
                      .max_src_len = m.at("max_src_len"),
                      .max_len = m.at("max_len"),
                      .dropout = m.at("dropout"),
                      .copy = m.at("copy")};
  GeneratorModel model(Vocab(ckpt.meta.at("vocab").get<std::vector<std::string>>()), cfg, ckpt.seed);
  ckpt.restore(model.params_);
  return model;
}

GeneratorExample make_generator_example(const Vocab& vocab, const Dialogue& dialogue,
                                        std::size_t response_index,
                                        const std::vector<std::string>& concepts,
                                        std::size_t max_src_len) {
  if (response_index == 0 || response_index >= dialogue.utterances.size()) {
    throw Error("dialogue " + dialogue.id + ": no context before turn " + std::to_string(response_index));
  }
  std::vector<std::vector<std::string>> context;
  for (std::size_t i = 0; i < response_index; ++i) context.push_back(dialogue.utterances[i].tokens);
  return {.id = dialogue.id + "#" + std::to_string(response_index),
          .input = build_input(vocab, context, concepts, max_src_len),
          .reference = dialogue.utterances[response_index].tokens};
}

GeneratorTrainReport train_generator(GeneratorModel& model, const std::vector<GeneratorExample>& examples,
                                     const GeneratorTrainOptions& opt,
                                     const std::function<void(std::size_t, double)>& on_step,
                                     const std::function<bool(std::size_t)>& stop) {
  GeneratorTrainReport report;
  if (examples.empty()) return report;
  Rng rng(opt.seed);
  nn::Adam adam(model.params(), {.lr = opt.lr});
  const nn::ForwardMode mode{.train = true, .dropout = model.config().dropout, .rng = &rng};
  const std::size_t batch = opt.batch_size == 0 ? examples.size() : opt.batch_size;
  for (std::size_t step = 1; step <= opt.steps; ++step) {
    model.params().zero_grad();
    Tensor total;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& ex = opt.batch_size == 0 ? examples[b] : examples[rng.below(examples.size())];
      const Tensor l = model.loss(ex.input, ex.reference, mode);
      total = total.defined() ? nn::add(total, l) : l;
    }
    const Tensor loss = nn::scale(total, 1.0 / static_cast<double>(batch));
    if (!std::isfinite(loss.item())) {
      throw nn::NonFiniteError("generator training: non-finite loss at step " + std::to_string(step));
    }
    loss.backward();
    adam.step();
    report.steps = step;
    report.last_loss = loss.item();
    if (on_step) on_step(step, report.last_loss);
    if (stop && stop(step)) break;
  }
  return report;
}

double mean_generator_loss(const GeneratorModel& model, const std::vector<GeneratorExample>& examples) {
  if (examples.empty()) return 0.0;
  nn::NoGradGuard guard;
  double total = 0.0;
  for (const auto& ex : examples) total += model.loss(ex.input, ex.reference).item();
  return total / static_cast<double>(examples.size());
}

double exact_match_rate(const GeneratorModel& model, const std::vector<GeneratorExample>& examples) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ex : examples) {
    hits += model.generate(ex.input, ex.reference.size() + 1).tokens == ex.reference;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

}  // namespace ectg
