#include "ectg/cause_analysis.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "ectg/keywords.hpp"
#include "ectg/nn/optim.hpp"

namespace ectg {

using nn::Tensor;

SpanModel::SpanModel(Vocab vocab, std::vector<std::string> emotions, SpanModelConfig cfg,
                     std::uint64_t seed)
    : vocab_(std::move(vocab)), emotions_(std::move(emotions)), cfg_(cfg) {
  if (emotions_.empty()) throw Error("span model needs at least one emotion label");
  Rng rng(seed);
  const std::size_t d = cfg_.d_model;
  token_emb_ = params_.xavier("span.token_emb", vocab_.size(), d, rng);
  emotion_emb_ = params_.xavier("span.emotion_emb", emotions_.size(), d, rng);
  encoder_ = nn::TransformerEncoder(
      params_, "span.encoder",
      {.d_model = d, .heads = cfg_.heads, .ff_mult = cfg_.ff_mult, .layers = cfg_.layers}, rng);
  start_proj_ = nn::Linear(params_, "span.start_proj", d, d, rng);
  start_v_ = params_.xavier("span.start_v", d, 1, rng);
  end_proj_ = nn::Linear(params_, "span.end_proj", d, d, rng);
  end_cond_ = nn::Linear(params_, "span.end_cond", d, d, rng, false);
  end_v_ = params_.xavier("span.end_v", d, 1, rng);
}

int SpanModel::emotion_id(const std::string& label) const {
  for (std::size_t i = 0; i < emotions_.size(); ++i) {
    if (emotions_[i] == label) return static_cast<int>(i);
  }
  std::string known;
  for (const auto& e : emotions_) known += (known.empty() ? "" : ", ") + e;
  throw Error("unknown emotion label '" + label + "'; known labels: " + known);
}

Tensor SpanModel::encode(const std::vector<int>& token_ids, int emotion,
                         const nn::ForwardMode& mode) const {
  if (token_ids.empty()) throw Error("span model: empty token list");
  if (emotion < 0 || static_cast<std::size_t>(emotion) >= emotions_.size()) {
    throw Error("span model: emotion id " + std::to_string(emotion) + " out of range");
  }
  std::vector<int> ids = token_ids;
  ids.push_back(Vocab::kSep);
  const Tensor tokens = nn::embedding(token_emb_, ids);
  const Tensor emo = nn::embedding(emotion_emb_, {emotion});
  const double s = std::sqrt(static_cast<double>(cfg_.d_model));
  Tensor x = nn::scale(nn::concat_rows({tokens, emo}), s);
  x = nn::add(x, nn::positional_encoding(x.rows(), cfg_.d_model));
  return encoder_(nn::apply_dropout(x, mode), mode);
}

Tensor SpanModel::start_logits(const Tensor& hidden, std::size_t n) const {
  const Tensor h = nn::slice_rows(hidden, 0, n);
  return nn::transpose(nn::matmul(nn::tanh(start_proj_(h)), start_v_));
}

Tensor SpanModel::end_logits(const Tensor& hidden, std::size_t n, std::size_t start) const {
  const Tensor h = nn::slice_rows(hidden, 0, n);
  const Tensor cond = end_cond_(nn::slice_rows(hidden, start, 1));
  return nn::transpose(nn::matmul(nn::tanh(nn::add(end_proj_(h), cond)), end_v_));
}

nn::Checkpoint SpanModel::to_checkpoint(std::uint64_t seed) const {
  nn::Checkpoint c = nn::Checkpoint::capture(params_, seed);
  c.meta["kind"] = "span_model";
  c.meta["vocab"] = vocab_.tokens();
  c.meta["emotions"] = emotions_;
  c.meta["model"] = {{"d_model", cfg_.d_model}, {"heads", cfg_.heads},
                     {"layers", cfg_.layers},   {"ff_mult", cfg_.ff_mult},
                     {"dropout", cfg_.dropout}};
  return c;
}

SpanModel SpanModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.meta.value("kind", "") != "span_model") {
    throw nn::CheckpointError("checkpoint does not hold a span model");
  }
  const auto& m = ckpt.meta.at("model");
  SpanModelConfig cfg{.d_model = m.at("d_model"),
                      .heads = m.at("heads"),
                      .layers = m.at("layers"),
                      .ff_mult = m.at("ff_mult"),
                      .dropout = m.at("dropout")};
  SpanModel model(Vocab(ckpt.meta.at("vocab").get<std::vector<std::string>>()),
                  ckpt.meta.at("emotions").get<std::vector<std::string>>(), cfg, ckpt.seed);
  ckpt.restore(model.params_);
  return model;
}

Tensor encode_with_emotion(const SpanModel& model, const std::vector<std::string>& tokens,
                           const std::string& emotion) {
  return model.encode(model.vocab().encode(tokens), model.emotion_id(emotion));
}

SpanDistributions span_distributions(const SpanModel& model, const Tensor& hidden, std::size_t n,
                                     std::size_t start) {
  if (n == 0) throw Error("span distributions: all positions are masked");
  if (start >= n) throw Error("span distributions: start outside the utterance");
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i < start; ++i) mask[i] = true;
  const double inf = std::numeric_limits<double>::infinity();
  return {nn::softmax(model.start_logits(hidden, n)),
          nn::softmax(nn::masked_fill(model.end_logits(hidden, n, start), mask, -inf))};
}

namespace {

std::size_t argmax_from(std::span<const double> v, std::size_t from) {
  std::size_t best = from;
  for (std::size_t i = from + 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

CauseSpan predict_span(const SpanModel& model, const Tensor& hidden, std::size_t n) {
  if (n == 0) throw Error("predict_span: all positions are masked");
  nn::NoGradGuard guard;
  const Tensor start_dist = nn::softmax(model.start_logits(hidden, n));
  const std::size_t start = argmax_from(start_dist.values(), 0);
  const SpanDistributions d = span_distributions(model, hidden, n, start);
  const std::size_t end = argmax_from(d.end.values(), start);
  return {start, end, std::log(start_dist.values()[start]) + std::log(d.end.values()[end])};
}

namespace {

void check_gold(std::size_t n_start, std::size_t n_end, const TokenSpan& gold,
                double p_start, double p_end) {
  if (gold.start >= n_start || gold.end >= n_end) {
    throw Error("span_loss: gold span [" + std::to_string(gold.start) + "," +
                std::to_string(gold.end) + "] outside " + std::to_string(n_start) + " positions");
  }
  if (p_start == 0.0 || p_end == 0.0) {
    throw Error("span_loss: gold span lies on a masked position");
  }
}

}  // namespace

Tensor span_loss(const Tensor& start_dist, const Tensor& end_dist, const TokenSpan& gold) {
  check_gold(start_dist.cols(), end_dist.cols(), gold,
             gold.start < start_dist.cols() ? start_dist.values()[gold.start] : 0.0,
             gold.end < end_dist.cols() ? end_dist.values()[gold.end] : 0.0);
  const Tensor picked = nn::concat_rows(
      {nn::gather(start_dist, {{0, gold.start}}), nn::gather(end_dist, {{0, gold.end}})});
  return nn::scale(nn::sum(nn::log(picked)), -1.0);
}

double span_loss(std::span<const double> start_dist, std::span<const double> end_dist,
                 const TokenSpan& gold) {
  check_gold(start_dist.size(), end_dist.size(), gold,
             gold.start < start_dist.size() ? start_dist[gold.start] : 0.0,
             gold.end < end_dist.size() ? end_dist[gold.end] : 0.0);
  return -std::log(start_dist[gold.start]) - std::log(end_dist[gold.end]);
}

std::vector<SpanExample> make_span_examples(const SpanModel& model,
                                            const std::vector<Dialogue>& dialogues) {
  std::vector<SpanExample> out;
  for (const auto& d : dialogues) {
    const int emo = model.emotion_id(d.emotion);
    for (const auto& u : d.utterances) {
      if (u.cause_spans.empty()) continue;
      out.push_back({model.vocab().encode(u.tokens), emo, u.cause_spans});
    }
  }
  return out;
}

double span_exact_match(const SpanModel& model, const std::vector<SpanExample>& examples) {
  if (examples.empty()) return 0.0;
  nn::NoGradGuard guard;
  std::size_t hits = 0;
  for (const auto& ex : examples) {
    const CauseSpan s = predict_span(model, model.encode(ex.tokens, ex.emotion), ex.tokens.size());
    for (const auto& g : ex.gold) {
      if (g.start == s.start && g.end == s.end) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

SpanTrainReport train_span_model(SpanModel& model, const std::vector<SpanExample>& examples,
                                 const TrainOptions& opt, bool stop_when_exact,
                                 const std::function<void(std::size_t, double)>& on_step) {
  SpanTrainReport report;
  if (examples.empty()) return report;
  Rng rng(opt.seed);
  nn::Adam adam(model.params(), {.lr = opt.lr});
  const nn::ForwardMode mode{.train = true, .dropout = model.config().dropout, .rng = &rng};
  const std::size_t batch = opt.batch_size == 0 ? examples.size() : opt.batch_size;

  for (std::size_t step = 1; step <= opt.steps; ++step) {
    model.params().zero_grad();
    Tensor total;
    for (std::size_t b = 0; b < batch; ++b) {
      const SpanExample& ex =
          opt.batch_size == 0 ? examples[b] : examples[rng.below(examples.size())];
      const TokenSpan& gold = ex.gold[ex.gold.size() == 1 ? 0 : rng.below(ex.gold.size())];
      const Tensor hidden = model.encode(ex.tokens, ex.emotion, mode);
      const SpanDistributions dist = span_distributions(model, hidden, ex.tokens.size(), gold.start);
      const Tensor l = span_loss(dist.start, dist.end, gold);
      total = total.defined() ? nn::add(total, l) : l;
    }
    const Tensor loss = nn::scale(total, 1.0 / static_cast<double>(batch));
    if (!std::isfinite(loss.item())) throw nn::NonFiniteError("span training: non-finite loss");
    loss.backward();
    adam.step();
    report.steps = step;
    report.last_loss = loss.item();
    if (on_step) on_step(step, report.last_loss);
    if (stop_when_exact && (step % opt.eval_every == 0 || step == opt.steps)) {
      report.exact_match = span_exact_match(model, examples);
      if (report.exact_match == 1.0) return report;
    }
  }
  report.exact_match = span_exact_match(model, examples);
  return report;
}

std::vector<TokenSpan> SpanSource::spans(const Dialogue& d, std::size_t utterance) const {
  const Utterance& u = d.utterances.at(utterance);
  if (u.tokens.empty()) return {};
  const TokenSpan whole{0, u.tokens.size() - 1};
  if (whole_utterance) return {whole};
  if (use_gold && !u.cause_spans.empty()) return u.cause_spans;
  if (model != nullptr) {
    nn::NoGradGuard guard;
    const CauseSpan s = predict_span(
        *model, model->encode(model->vocab().encode(u.tokens), model->emotion_id(d.emotion)),
        u.tokens.size());
    return {{s.start, s.end}};
  }
  return {whole};
}

std::vector<std::string> utterance_concepts(const SpanSource& source, const Dialogue& d,
                                            std::size_t utterance) {
  const Utterance& u = d.utterances.at(utterance);
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : source.spans(d, utterance)) {
    const std::vector<std::string> piece(u.tokens.begin() + static_cast<std::ptrdiff_t>(s.start),
                                         u.tokens.begin() + static_cast<std::ptrdiff_t>(s.end) + 1);
    for (auto& w : extract_keywords(piece)) {
      if (seen.insert(w).second) out.push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace ectg
