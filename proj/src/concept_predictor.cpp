#include "ectg/concept_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"

#include "ectg/nn/optim.hpp"

namespace ectg {

using nn::Tensor;

GraphAttention graph_attend(const GraphAttentionWeights& w, const Tensor& hdc, const Tensor& hs,
                            const std::vector<CandidateSet>& candidates, const Tensor& embeddings) {
  if (candidates.empty()) throw Error("graph_attend: no transition available");
  const double inf = std::numeric_limits<double>::infinity();
  const Tensor state = nn::concat_cols({hdc, hs});
  GraphAttention out;
  std::vector<Tensor> pair_keys;
  for (const auto& c : candidates) {
    if (c.tails.empty() || c.masked.size() != c.tails.size()) {
      throw Error("graph_attend: malformed candidate set");
    }
    if (std::all_of(c.masked.begin(), c.masked.end(), [](bool m) { return m; })) {
      throw Error("graph_attend: every tail of a subgraph is masked");
    }
    const Tensor head = nn::embedding(embeddings, {static_cast<int>(c.head)});
    const Tensor tails = nn::embedding(embeddings, std::vector<int>(c.tails.begin(), c.tails.end()));
    const Tensor q = nn::matmul(nn::concat_cols({state, head}), w.tail_query);
    const Tensor k = nn::matmul(tails, w.tail_key);
    const Tensor scores = nn::masked_fill(nn::matmul(q, nn::transpose(k)), c.masked, -inf);
    const Tensor tail_w = nn::softmax(scores);
    const Tensor pairs = nn::concat_cols({nn::repeat_rows(head, c.tails.size()), tails});
    pair_keys.push_back(nn::matmul(nn::matmul(tail_w, pairs), w.pair_key));
    out.tail_weights.push_back(tail_w);
    out.joint_tail.insert(out.joint_tail.end(), c.tails.begin(), c.tails.end());
  }
  const Tensor q = nn::matmul(state, w.head_query);
  out.head_weights = nn::softmax(nn::matmul(q, nn::transpose(nn::concat_rows(pair_keys))));
  std::vector<Tensor> parts;
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    parts.push_back(nn::mul_scalar(out.tail_weights[j], nn::slice_cols(out.head_weights, j, 1)));
  }
  out.joint = nn::concat_cols(parts);
  return out;
}

std::vector<std::size_t> concept_set(const EctGraph& graph, const SpanSource& source,
                                     const Dialogue& d, std::size_t utterance, std::size_t cap) {
  std::vector<std::size_t> out;
  for (const auto& c : utterance_concepts(source, d, utterance)) {
    if (out.size() >= cap) break;
    const auto v = graph.find(c);
    if (v && std::find(out.begin(), out.end(), *v) == out.end()) out.push_back(*v);
  }
  return out;
}

ConceptExample make_concept_example(const Vocab& vocab, const EctGraph& graph,
                                    const SpanSource& source, const Dialogue& d,
                                    std::size_t response_index, std::size_t cap) {
  if (response_index == 0 || response_index >= d.utterances.size()) {
    throw Error("dialogue " + d.id + ": response index " + std::to_string(response_index) +
                " needs at least one preceding utterance");
  }
  ConceptExample ex;
  ex.id = d.id;
  for (std::size_t i = 0; i < response_index; ++i) {
    ex.context.push_back(vocab.encode(d.utterances[i].tokens));
    ex.concept_sets.push_back(concept_set(graph, source, d, i, cap));
  }
  ex.gold = concept_set(graph, source, d, response_index, cap);
  ex.response = vocab.encode(d.utterances[response_index].tokens);
  return ex;
}

std::vector<std::size_t> reachable_gold(const EctGraph& graph, const ConceptExample& ex) {
  if (ex.concept_sets.empty()) return {};
  std::vector<std::string> heads;
  for (auto v : ex.concept_sets.back()) heads.push_back(graph.name(v));
  std::vector<std::size_t> tails;
  for (const auto& g : retrieve_subgraphs(graph, heads)) tails.insert(tails.end(), g.tails.begin(), g.tails.end());
  std::vector<std::size_t> out;
  for (auto v : ex.gold) {
    if (std::find(tails.begin(), tails.end(), v) != tails.end()) out.push_back(v);
  }
  return out;
}

ConceptModel::ConceptModel(Vocab vocab, EctGraph graph, ConceptModelConfig cfg, std::uint64_t seed)
    : vocab_(std::move(vocab)), graph_(std::move(graph)), cfg_(cfg) {
  Rng rng(seed);
  const auto& e = cfg_.encoder;
  const std::size_t d = e.d_model;
  encoder_ = DialogueEncoder(params_, "concept.encoder", vocab_.size(), e, rng);
  concept_emb_ = params_.xavier("concept.concept_emb", graph_.vertex_count() + 2, d, rng);
  decoder_ = nn::TransformerDecoder(params_, "concept.decoder",
                                    {.d_model = d, .heads = e.heads, .ff_mult = e.ff_mult,
                                     .layers = cfg_.decoder_layers},
                                    rng);
  att_.head_query = params_.xavier("concept.att.head_query", d + e.d_gru, d, rng);
  att_.pair_key = params_.xavier("concept.att.pair_key", 2 * d, d, rng);
  att_.tail_query = params_.xavier("concept.att.tail_query", 2 * d + e.d_gru, d, rng);
  att_.tail_key = params_.xavier("concept.att.tail_key", d, d, rng);
  slot_proj_ = nn::Linear(params_, "concept.slot_proj", 2 * d, d, rng);
  slot_attn_ = nn::MultiHeadAttention(params_, "concept.slot_attn", d, e.heads, rng);
  slot_norm_ = nn::LayerNorm(params_, "concept.slot_norm", d);
}

ContextEncoding ConceptModel::encode(const ConceptExample& ex, const nn::ForwardMode& mode) const {
  return encoder_.encode(ex.context, concept_emb_, ex.concept_sets, mode);
}

nn::DecoderResult ConceptModel::decode(const std::vector<std::size_t>& prefix,
                                       const ContextEncoding& ctx,
                                       const nn::ForwardMode& mode) const {
  std::vector<int> ids{static_cast<int>(begin_id())};
  for (auto c : prefix) ids.push_back(static_cast<int>(c));
  return decoder_(nn::apply_dropout(embed_sequence(concept_emb_, ids), mode), ctx.context, mode);
}

std::vector<CandidateSet> ConceptModel::candidates(const ConceptExample& ex,
                                                   const std::vector<std::size_t>& decoded) const {
  if (ex.concept_sets.empty()) return {};
  std::vector<std::string> heads;
  for (auto v : ex.concept_sets.back()) heads.push_back(graph_.name(v));
  std::vector<CandidateSet> out;
  for (const auto& g : retrieve_subgraphs(graph_, heads)) {
    CandidateSet c{g.head, g.tails, {}};
    c.tails.push_back(stop_id());
    for (auto t : c.tails) {
      c.masked.push_back(std::find(decoded.begin(), decoded.end(), t) != decoded.end());
    }
    out.push_back(std::move(c));
  }
  return out;
}

Tensor ConceptModel::insertion_log_probs(const Tensor& states, const std::vector<int>& partial,
                                         const nn::ForwardMode& mode) const {
  std::vector<int> left{Vocab::kBos};
  left.insert(left.end(), partial.begin(), partial.end());
  std::vector<int> right(partial.begin(), partial.end());
  right.push_back(Vocab::kEos);
  const Tensor& table = encoder_.token_embeddings();
  const Tensor pair = nn::concat_cols({nn::embedding(table, left), nn::embedding(table, right)});
  Tensor x = nn::add(slot_proj_(pair), nn::positional_encoding(left.size(), cfg_.encoder.d_model));
  x = nn::apply_dropout(x, mode);
  const Tensor y = slot_norm_(nn::add(x, slot_attn_(x, states, false).output));
  return nn::log_softmax(nn::matmul(y, nn::transpose(table)));
}

const Tensor& ConceptModel::insertion_states(const nn::DecoderResult& dec) {
  const std::size_t n = dec.layer_states.size();
  return dec.layer_states[n >= 2 ? n - 2 : 0];
}

nn::Checkpoint ConceptModel::to_checkpoint(std::uint64_t seed) const {
  nn::Checkpoint c = nn::Checkpoint::capture(params_, seed);
  const auto& e = cfg_.encoder;
  c.meta["kind"] = "concept_model";
  c.meta["vocab"] = vocab_.tokens();
  c.meta["graph"] = nlohmann::json::parse(save_graph(graph_));
  c.meta["model"] = {{"d_model", e.d_model},
                     {"heads", e.heads},
                     {"ff_mult", e.ff_mult},
                     {"utterance_layers", e.utterance_layers},
                     {"context_layers", e.context_layers},
                     {"d_gru", e.d_gru},
                     {"dropout", e.dropout},
                     {"decoder_layers", cfg_.decoder_layers},
                     {"max_concepts", cfg_.max_concepts},
                     {"concept_weight", cfg_.concept_weight},
                     {"strict", cfg_.strict}};
  return c;
}

ConceptModel ConceptModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.meta.value("kind", "") != "concept_model") {
    throw nn::CheckpointError("checkpoint does not hold a concept model");
  }
  const auto& m = ckpt.meta.at("model");
  ConceptModelConfig cfg;
  cfg.encoder = {.d_model = m.at("d_model"),
                 .heads = m.at("heads"),
                 .ff_mult = m.at("ff_mult"),
                 .utterance_layers = m.at("utterance_layers"),
                 .context_layers = m.at("context_layers"),
                 .d_gru = m.at("d_gru"),
                 .dropout = m.at("dropout")};
  cfg.decoder_layers = m.at("decoder_layers");
  cfg.max_concepts = m.at("max_concepts");
  cfg.concept_weight = m.at("concept_weight");
  cfg.strict = m.at("strict");
  ConceptModel model(Vocab(ckpt.meta.at("vocab").get<std::vector<std::string>>()),
                     load_graph(ckpt.meta.at("graph").dump()), cfg, ckpt.seed);
  ckpt.restore(model.params_);
  return model;
}

NllResult concept_nll(const std::vector<GraphAttention>& steps, const std::vector<std::size_t>& gold,
                      bool strict) {
  if (steps.size() != gold.size()) throw Error("concept_nll: one gold concept per step is required");
  NllResult r;
  Tensor total;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    std::vector<std::pair<std::size_t, std::size_t>> cols;
    for (std::size_t c = 0; c < steps[t].joint_tail.size(); ++c) {
      if (steps[t].joint_tail[c] == gold[t]) cols.emplace_back(0, c);
    }
    double mass = 0.0;
    for (const auto& [row, c] : cols) mass += steps[t].joint.values()[c];
    if (cols.empty() || mass == 0.0) {
      if (strict) {
        throw Error("concept_nll: gold concept " + std::to_string(gold[t]) +
                    " is not reachable at step " + std::to_string(t + 1));
      }
      ++r.skipped;
      continue;
    }
    const Tensor nll = nn::scale(nn::log(nn::sum(nn::gather(steps[t].joint, cols))), -1.0);
    total = total.defined() ? nn::add(total, nll) : nll;
    ++r.scored;
  }
  r.loss = r.scored == 0 ? Tensor::scalar(0.0) : nn::scale(total, 1.0 / static_cast<double>(r.scored));
  return r;
}

InsertionTargets insertion_targets(const std::vector<int>& response, const std::vector<bool>& keep) {
  if (keep.size() != response.size()) throw Error("insertion_targets: mask length mismatch");
  InsertionTargets t;
  t.slot_targets.emplace_back();
  for (std::size_t i = 0; i < response.size(); ++i) {
    if (keep[i]) {
      t.partial.push_back(response[i]);
      t.slot_targets.emplace_back();
    } else {
      t.slot_targets.back().push_back(response[i]);
    }
  }
  return t;
}

std::vector<bool> sample_keep_mask(std::size_t n, Rng& rng) {
  std::vector<bool> keep(n);
  for (std::size_t i = 0; i < n; ++i) keep[i] = rng.below(2) == 1;
  return keep;
}

Tensor insertion_loss(const Tensor& slot_log_probs, const InsertionTargets& targets) {
  const std::size_t slots = targets.slot_targets.size();
  if (targets.partial.empty() && (slots == 0 || targets.slot_targets[0].empty())) {
    throw Error("insertion_loss: empty gold response");
  }
  if (slot_log_probs.rows() != slots) {
    throw Error("insertion_loss: " + std::to_string(slot_log_probs.rows()) + " slot rows for " +
                std::to_string(slots) + " slots");
  }
  std::vector<std::pair<std::size_t, std::size_t>> at;
  std::vector<double> weights;
  for (std::size_t pos = 0; pos < slots; ++pos) {
    const auto& missing = targets.slot_targets[pos];
    if (missing.empty()) {
      at.emplace_back(pos, static_cast<std::size_t>(Vocab::kEos));
      weights.push_back(-1.0 / static_cast<double>(slots));
      continue;
    }
    for (int tok : missing) {
      at.emplace_back(pos, static_cast<std::size_t>(tok));
      weights.push_back(-1.0 / (static_cast<double>(slots) * static_cast<double>(missing.size())));
    }
  }
  const Tensor w = Tensor::from(weights.size(), 1, weights);
  return nn::sum(nn::mul(nn::gather(slot_log_probs, at), w));
}

Tensor combined_loss(const Tensor& l_g, const Tensor& l_c, double r) {
  if (r < 0.0) throw Error("combined_loss: the concept weight must be non-negative");
  return nn::add(l_g, nn::scale(l_c, r));
}

ConceptLosses concept_losses(const ConceptModel& model, const ConceptExample& ex, Rng& rng,
                             const nn::ForwardMode& mode) {
  const ContextEncoding ctx = model.encode(ex, mode);
  // Unreachable gold concepts are dropped from the teacher-forced prefix too;
  // otherwise training conditions on prefixes decoding can never produce.
  const std::vector<std::size_t> gold = model.config().strict ? ex.gold : reachable_gold(model.graph(), ex);
  const nn::DecoderResult dec = model.decode(gold, ctx, mode);
  std::vector<std::size_t> targets = gold;
  targets.push_back(model.stop_id());

  ConceptLosses out;
  if (model.candidates(ex, {}).empty()) {
    if (model.config().strict) throw Error("example " + ex.id + ": no subgraph to decode from");
    out.l_c = Tensor::scalar(0.0);
    out.skipped = targets.size();
  } else {
    std::vector<GraphAttention> steps;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const std::vector<std::size_t> decoded(gold.begin(), gold.begin() + static_cast<std::ptrdiff_t>(t));
      steps.push_back(graph_attend(model.attention_weights(), nn::slice_rows(dec.output, t, 1),
                                   ctx.last_flow(), model.candidates(ex, decoded),
                                   model.concept_embeddings()));
    }
    const NllResult nll = concept_nll(steps, targets, model.config().strict);
    out.l_c = nll.loss;
    out.scored = nll.scored;
    out.skipped = nll.skipped + (ex.gold.size() - gold.size());
  }
  const InsertionTargets ins = insertion_targets(ex.response, sample_keep_mask(ex.response.size(), rng));
  out.l_g = insertion_loss(
      model.insertion_log_probs(ConceptModel::insertion_states(dec), ins.partial, mode), ins);
  out.total = combined_loss(out.l_g, out.l_c, model.config().concept_weight);
  return out;
}

ConceptLosses batch_concept_losses(const ConceptModel& model,
                                   const std::vector<const ConceptExample*>& batch, Rng& rng,
                                   const nn::ForwardMode& mode) {
  if (batch.empty()) throw Error("batch_concept_losses: empty batch");
  Tensor l_g, l_c;
  std::size_t with_steps = 0;
  ConceptLosses out;
  for (const ConceptExample* ex : batch) {
    const ConceptLosses one = concept_losses(model, *ex, rng, mode);
    l_g = l_g.defined() ? nn::add(l_g, one.l_g) : one.l_g;
    if (one.scored > 0) {
      l_c = l_c.defined() ? nn::add(l_c, one.l_c) : one.l_c;
      ++with_steps;
    }
    out.scored += one.scored;
    out.skipped += one.skipped;
  }
  out.l_g = nn::scale(l_g, 1.0 / static_cast<double>(batch.size()));
  out.l_c = with_steps == 0 ? Tensor::scalar(0.0)
                            : nn::scale(l_c, 1.0 / static_cast<double>(with_steps));
  out.total = combined_loss(out.l_g, out.l_c, model.config().concept_weight);
  return out;
}

std::vector<std::string> predict_concepts(const ConceptModel& model, const ConceptExample& ex,
                                          std::size_t max_concepts) {
  nn::NoGradGuard guard;
  std::vector<std::string> out;
  if (model.candidates(ex, {}).empty() || max_concepts == 0) return out;
  const ContextEncoding ctx = model.encode(ex);
  std::vector<std::size_t> decoded;
  while (decoded.size() < max_concepts) {
    const nn::DecoderResult dec = model.decode(decoded, ctx);
    const GraphAttention att =
        graph_attend(model.attention_weights(), nn::slice_rows(dec.output, decoded.size(), 1),
                     ctx.last_flow(), model.candidates(ex, decoded), model.concept_embeddings());
    const auto p = att.joint.values();
    const std::size_t best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    const std::size_t tail = att.joint_tail[best];
    if (tail == model.stop_id()) break;
    decoded.push_back(tail);
    out.push_back(model.graph().name(tail));
  }
  return out;
}

ConceptTrainReport train_concept_model(ConceptModel& model, const std::vector<ConceptExample>& examples,
                                       const ConceptTrainOptions& opt,
                                       const std::function<void(const ConceptStep&)>& on_step) {
  ConceptTrainReport report;
  if (examples.empty()) return report;
  Rng rng(opt.seed);
  nn::Adam adam(model.params(), {.lr = opt.lr});
  const nn::ForwardMode mode{.train = true, .dropout = model.config().encoder.dropout, .rng = &rng};
  for (std::size_t step = 1; step <= opt.steps; ++step) {
    std::vector<const ConceptExample*> batch;
    if (opt.batch_size == 0) {
      for (const auto& ex : examples) batch.push_back(&ex);
    } else {
      for (std::size_t b = 0; b < opt.batch_size; ++b) batch.push_back(&examples[rng.below(examples.size())]);
    }
    model.params().zero_grad();
    const ConceptLosses l = batch_concept_losses(model, batch, rng, mode);
    const ConceptStep s{step, l.total.item(), l.l_c.item(), l.l_g.item()};
    if (!std::isfinite(s.total)) throw nn::NonFiniteError("concept training: non-finite loss at step " + std::to_string(step));
    report.last = s;
    if (on_step) on_step(s);
    if (l.scored > 0 && s.l_c < opt.stop_below) break;
    l.total.backward();
    adam.step();
    report.steps = step;
  }
  return report;
}

}  // namespace ectg
