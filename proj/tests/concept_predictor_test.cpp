#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "ectg/concept_predictor.hpp"
#include "ectg/nn/optim.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ectg;
using ectg::testing::random_tensor;
using nn::Tensor;

namespace {

using namespace ectg::testing::scalar;

GraphAttentionWeights random_weights(std::size_t d, std::size_t g, std::size_t a, Rng& rng) {
  return {random_tensor(d + g, a, rng), random_tensor(2 * d, a, rng), random_tensor(2 * d + g, a, rng),
          random_tensor(d, a, rng)};
}

CandidateSet cands(std::size_t head, std::vector<std::size_t> tails) {
  return {head, tails, std::vector<bool>(tails.size(), false)};
}

double row_sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s;
}

}  // namespace

TEST(ConceptFlow, SingletonAndEmptySets) {
  Rng rng(1);
  nn::ParameterSet p;
  nn::GruCell gru(p, "gru", 4, 6, rng);
  const Tensor w = random_tensor(6, 4, rng);
  const Tensor emb = random_tensor(5, 4, rng);
  const auto f = concept_flow(gru, w, emb, {{2}, {}, {1, 3}});
  ASSERT_EQ(f.states.size(), 4u);
  EXPECT_EQ(f.alphas[0].values()[0], 1.0);
  EXPECT_FALSE(f.alphas[1].defined());
  for (double v : f.states[0].values()) EXPECT_EQ(v, 0.0);
  // empty sets: plain GRU iteration on zero inputs
  const auto e = concept_flow(gru, w, emb, {{}, {}});
  Tensor h = Tensor::zeros(1, 6);
  for (int i = 0; i < 2; ++i) h = gru(Tensor::zeros(1, 4), h);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(e.states[2].values()[k], h.values()[k]);
}

TEST(ConceptFlow, AlphaMatchesHandComputation) {
  Rng rng(2);
  nn::ParameterSet p;
  nn::GruCell gru(p, "gru", 3, 4, rng);
  const Tensor w = random_tensor(4, 3, rng);
  const Tensor emb = random_tensor(4, 3, rng);
  const auto f = concept_flow(gru, w, emb, {{0}, {1, 3}});
  const Vec hs = row(f.states[1], 0);
  const Vec proj = vecmat(hs, w);
  const Vec beta = {dot(proj, row(emb, 1)), dot(proj, row(emb, 3))};
  const double z = std::exp(beta[0]) + std::exp(beta[1]);
  EXPECT_NEAR(f.alphas[1].values()[0], std::exp(beta[0]) / z, 1e-12);
  EXPECT_NEAR(f.alphas[1].values()[1], std::exp(beta[1]) / z, 1e-12);
  // the GRU input is the alpha-weighted sum
  const Vec e1 = row(emb, 1), e3 = row(emb, 3);
  Vec in(3);
  for (int k = 0; k < 3; ++k) in[k] = f.alphas[1].values()[0] * e1[k] + f.alphas[1].values()[1] * e3[k];
  const Tensor expect = gru(Tensor::from(1, 3, in), f.states[1]);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(f.states[2].values()[k], expect.values()[k], 1e-12);
}

TEST(ConceptFlow, PrefixCausal) {
  Rng rng(3);
  nn::ParameterSet p;
  nn::GruCell gru(p, "gru", 3, 5, rng);
  const Tensor w = random_tensor(5, 3, rng);
  const Tensor emb = random_tensor(6, 3, rng);
  const auto full = concept_flow(gru, w, emb, {{0, 1}, {2}, {3, 4, 5}});
  const auto cut = concept_flow(gru, w, emb, {{0, 1}, {2}});
  for (int k = 0; k < 5; ++k) EXPECT_EQ(full.states[2].values()[k], cut.states[2].values()[k]);
}

TEST(Encoders, UtteranceAndContextShapes) {
  const auto toy = ectg::testing::load_toy();
  Rng rng(4);
  nn::ParameterSet p;
  DialogueEncoder enc(p, "enc", toy.vocab.size(), {}, rng);
  const auto& u0 = toy.examples[0].context[0];
  const auto& u1 = toy.examples[3].context[0];
  const Tensor a = enc.encode_utterance(u0);
  EXPECT_EQ(a.cols(), 128u);
  EXPECT_EQ(a.rows(), 1u);
  const Tensor a2 = enc.encode_utterance(u0);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), a2.values().begin()));
  const Tensor b = enc.encode_utterance(u1);
  EXPECT_FALSE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));

  EXPECT_EQ(enc.encode_context(a).rows(), 1u);
  const Tensor ab = enc.encode_context(nn::concat_rows({a, b}));
  const Tensor ba = enc.encode_context(nn::concat_rows({b, a}));
  EXPECT_FALSE(std::equal(ab.values().begin(), ab.values().begin() + 128, ba.values().begin() + 128));

  std::vector<Tensor> rows;
  for (int i = 0; i < 8; ++i) rows.push_back(enc.encode_utterance(toy.examples[i].context[0]));
  const Tensor h8 = enc.encode_context(nn::concat_rows(rows));
  double norm = 0.0;
  for (double v : h8.values()) {
    EXPECT_TRUE(std::isfinite(v));
    norm += v * v;
  }
  EXPECT_LT(std::sqrt(norm), 1e3);
  const auto flow = enc.flow(random_tensor(4, 128, rng), {{0}, {}, {1, 2}});
  EXPECT_EQ(flow.states.back().cols(), 768u);
}

TEST(GraphAttention, SingletonAndSymmetry) {
  Rng rng(5);
  const auto w = random_weights(3, 2, 4, rng);
  const Tensor hdc = random_tensor(1, 3, rng), hs = random_tensor(1, 2, rng);
  Tensor emb = random_tensor(4, 3, rng);
  const auto one = graph_attend(w, hdc, hs, {cands(0, {1})}, emb);
  EXPECT_EQ(one.head_weights.values()[0], 1.0);
  EXPECT_EQ(one.tail_weights[0].values()[0], 1.0);
  EXPECT_EQ(one.joint.values()[0], 1.0);
  // rows 2 and 3 identical
  std::vector<double> v(emb.values().begin(), emb.values().end());
  for (int k = 0; k < 3; ++k) v[9 + k] = v[6 + k];
  emb = Tensor::from(4, 3, v);
  const auto sym = graph_attend(w, hdc, hs, {cands(0, {2, 3})}, emb);
  EXPECT_EQ(sym.tail_weights[0].values()[0], 0.5);
  EXPECT_EQ(sym.tail_weights[0].values()[1], 0.5);
  EXPECT_THROW(graph_attend(w, hdc, hs, {}, emb), Error);
}

TEST(GraphAttention, MatchesHandComputation) {
  Rng rng(6);
  const std::size_t d = 2, g = 1, a = 2;
  const auto w = random_weights(d, g, a, rng);
  const Tensor hdc = random_tensor(1, d, rng), hs = random_tensor(1, g, rng);
  const Tensor emb = random_tensor(6, d, rng);
  const std::vector<CandidateSet> cs = {cands(0, {2, 3}), cands(1, {4, 5})};
  const auto att = graph_attend(w, hdc, hs, cs, emb);

  const Vec state = cat({row(hdc, 0), row(hs, 0)});
  std::vector<Vec> tail_w;
  Vec head_scores;
  const Vec q_head = vecmat(state, w.head_query);
  for (const auto& c : cs) {
    const Vec eh = row(emb, c.head);
    const Vec q = vecmat(cat({state, eh}), w.tail_query);
    Vec beta;
    for (auto t : c.tails) beta.push_back(dot(q, vecmat(row(emb, t), w.tail_key)));
    const Vec alpha = softmax_vec(beta);
    Vec pair(2 * d, 0.0);
    for (std::size_t k = 0; k < c.tails.size(); ++k) {
      const Vec pk = cat({eh, row(emb, c.tails[k])});
      for (std::size_t i = 0; i < 2 * d; ++i) pair[i] += alpha[k] * pk[i];
    }
    head_scores.push_back(dot(q_head, vecmat(pair, w.pair_key)));
    tail_w.push_back(alpha);
  }
  const Vec head_w = softmax_vec(head_scores);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(att.head_weights.values()[j], head_w[j], 1e-9);
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_NEAR(att.tail_weights[j].values()[k], tail_w[j][k], 1e-9);
      EXPECT_NEAR(att.joint.values()[2 * j + k], head_w[j] * tail_w[j][k], 1e-9);
    }
  }
  EXPECT_EQ(att.joint_tail, (std::vector<std::size_t>{2, 3, 4, 5}));
}

TEST(GraphAttention, DistributionInvariants) {
  Rng rng(7);
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.below(4), g = 1 + rng.below(4), a = 1 + rng.below(4);
    const std::size_t n_emb = 12;
    const auto w = random_weights(d, g, a, rng);
    const Tensor emb = random_tensor(n_emb, d, rng, 2.0);
    std::vector<CandidateSet> cs;
    for (auto j = 1 + rng.below(4); j > 0; --j) {
      CandidateSet c{rng.below(n_emb), {}, {}};
      for (auto k = 1 + rng.below(5); k > 0; --k) {
        c.tails.push_back(rng.below(n_emb));
        c.masked.push_back(rng.below(4) == 0);
      }
      c.masked.back() = false;
      cs.push_back(c);
    }
    const auto att = graph_attend(w, random_tensor(1, d, rng, 2.0), random_tensor(1, g, rng, 2.0), cs, emb);
    EXPECT_NEAR(row_sum(att.head_weights), 1.0, 1e-9);
    EXPECT_NEAR(row_sum(att.joint), 1.0, 1e-9);
    for (std::size_t j = 0; j < cs.size(); ++j) {
      EXPECT_NEAR(row_sum(att.tail_weights[j]), 1.0, 1e-9);
      for (std::size_t k = 0; k < cs[j].tails.size(); ++k) {
        if (cs[j].masked[k]) {
          EXPECT_EQ(att.tail_weights[j].values()[k], 0.0);
        }
      }
    }
    for (double v : att.joint.values()) EXPECT_GE(v, 0.0);

    // concept flow alphas on the same random draw
    nn::ParameterSet p;
    nn::GruCell gru(p, "gru", d, g, rng);
    std::vector<std::vector<std::size_t>> sets(1 + rng.below(3));
    for (auto& s : sets) {
      for (auto m = rng.below(5); m > 0; --m) s.push_back(rng.below(n_emb));
    }
    const auto f = concept_flow(gru, random_tensor(g, d, rng, 2.0), emb, sets);
    for (std::size_t i = 0; i < sets.size(); ++i) {
      if (!sets[i].empty()) {
        EXPECT_NEAR(row_sum(f.alphas[i]), 1.0, 1e-9);
      }
    }
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 60.0);
}

TEST(GraphAttention, HeadRankingInvariantUnderPositiveScaling) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto w = random_weights(3, 2, 3, rng);
    const Tensor hdc = random_tensor(1, 3, rng), hs = random_tensor(1, 2, rng);
    const Tensor emb = random_tensor(8, 3, rng);
    const std::vector<CandidateSet> cs = {cands(0, {1, 2}), cands(3, {4}), cands(5, {6, 7})};
    const auto base = graph_attend(w, hdc, hs, cs, emb);
    w.pair_key = nn::scale(w.pair_key, 0.1 + 3.0 * rng.uniform());
    const auto scaled = graph_attend(w, hdc, hs, cs, emb);
    const auto argmax = [](const Tensor& t) {
      const auto v = t.values();
      return std::max_element(v.begin(), v.end()) - v.begin();
    };
    EXPECT_EQ(argmax(base.head_weights), argmax(scaled.head_weights));
  }
}

TEST(ConceptNll, AnalyticValues) {
  GraphAttention one;
  one.joint = Tensor::from(1, 1, {1.0});
  one.joint_tail = {7};
  EXPECT_EQ(concept_nll({one, one}, {7, 7}).loss.item(), 0.0);

  GraphAttention quarter;
  quarter.joint = Tensor::from(1, 4, {0.25, 0.25, 0.25, 0.25});
  quarter.joint_tail = {1, 2, 3, 4};
  EXPECT_NEAR(concept_nll({quarter}, {2}).loss.item(), std::log(4.0), 1e-12);

  // pairs sharing a tail are marginalized
  GraphAttention shared;
  shared.joint = Tensor::from(1, 3, {0.2, 0.5, 0.3});
  shared.joint_tail = {9, 4, 9};
  EXPECT_NEAR(concept_nll({shared}, {9}).loss.item(), -std::log(0.5), 1e-12);

  const auto skipped = concept_nll({quarter, quarter}, {2, 99});
  EXPECT_EQ(skipped.scored, 1u);
  EXPECT_EQ(skipped.skipped, 1u);
  EXPECT_NEAR(skipped.loss.item(), std::log(4.0), 1e-12);
  EXPECT_THROW(concept_nll({quarter}, {99}, true), Error);
}

TEST(InsertionLoss, FormulaInstances) {
  Rng rng(9);
  const Tensor logits = random_tensor(3, 10, rng);
  const Tensor lp = nn::log_softmax(logits);
  // partial = full response: every slot targets <eos>
  const auto full = insertion_targets({6, 7}, {true, true});
  ASSERT_EQ(full.slot_targets.size(), 3u);
  const double expect_full = -(lp.at(0, Vocab::kEos) + lp.at(1, Vocab::kEos) + lp.at(2, Vocab::kEos)) / 3.0;
  EXPECT_NEAR(insertion_loss(lp, full).item(), expect_full, 1e-12);
  // gold "a b", nothing kept: one slot holding both tokens
  const auto none = insertion_targets({6, 7}, {false, false});
  const Tensor lp1 = nn::slice_rows(lp, 0, 1);
  EXPECT_NEAR(insertion_loss(lp1, none).item(), -0.5 * (lp.at(0, 6) + lp.at(0, 7)), 1e-12);
  // mixed: [6 _ 8 9 _] with 7 kept... slots: {6}, {8, 9}, {}
  const auto mixed = insertion_targets({6, 7, 8, 9, 5}, {false, true, false, false, true});
  EXPECT_EQ(mixed.partial, (std::vector<int>{7, 5}));
  const double expect = (-lp.at(0, 6) - 0.5 * (lp.at(1, 8) + lp.at(1, 9)) - lp.at(2, Vocab::kEos)) / 3.0;
  EXPECT_NEAR(insertion_loss(lp, mixed).item(), expect, 1e-12);
  EXPECT_THROW(insertion_loss(lp1, insertion_targets({}, {})), Error);
}

TEST(CombinedLoss, Arithmetic) {
  EXPECT_EQ(combined_loss(Tensor::scalar(1.0), Tensor::scalar(2.0), 0.0).item(), 1.0);
  EXPECT_EQ(combined_loss(Tensor::scalar(1.0), Tensor::scalar(2.0), 0.5).item(), 2.0);
  EXPECT_THROW(combined_loss(Tensor::scalar(1.0), Tensor::scalar(2.0), -1.0), Error);
}

TEST(ConceptModel, GradientsMatchFiniteDifferences) {
  const auto toy = ectg::testing::load_toy();
  ConceptModel model(toy.vocab, toy.graph, ectg::testing::tiny_concept_config(), 3);
  std::vector<const ConceptExample*> batch;
  for (const auto& ex : toy.examples) {
    if (!model.candidates(ex, {}).empty() && !ex.gold.empty() && batch.size() < 2) batch.push_back(&ex);
  }
  ASSERT_EQ(batch.size(), 2u);
  const auto loss = [&] {
    Rng rng(5);
    return batch_concept_losses(model, batch, rng).total;
  };
  Rng probe(1);
  EXPECT_LT(nn::grad_check(loss, model.params(), 150, probe), 1e-3);

  // total gradient = grad L_g + r * grad L_c
  const double r = 0.7;
  auto cfg = ectg::testing::tiny_concept_config();
  cfg.concept_weight = r;
  ConceptModel m2(toy.vocab, toy.graph, cfg, 3);
  const auto grads_of = [&](int which) {
    m2.params().zero_grad();
    Rng rng(5);
    const auto l = batch_concept_losses(m2, batch, rng);
    (which == 0 ? l.total : which == 1 ? l.l_g : l.l_c).backward();
    const Tensor t = m2.params().get("concept.encoder.token_emb");
    return std::vector<double>(t.grad().begin(), t.grad().end());
  };
  const auto total = grads_of(0), lg = grads_of(1), lc = grads_of(2);
  for (std::size_t i = 0; i < total.size(); ++i) EXPECT_NEAR(total[i], lg[i] + r * lc[i], 1e-12);
}

TEST(ConceptModel, DecoderIsCausal) {
  const auto toy = ectg::testing::load_toy();
  ConceptModel model(toy.vocab, toy.graph, ectg::testing::tiny_concept_config(), 3);
  const auto& ex = toy.examples[0];
  const auto ctx = model.encode(ex);
  const auto short_dec = model.decode({0}, ctx);
  const auto long_dec = model.decode({0, 1}, ctx);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(short_dec.output.at(r, c), long_dec.output.at(r, c));
  }
  // step-by-step recomputation: the t-th row equals the last row of a decoder run on the prefix
  const auto step1 = model.decode({}, ctx);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(step1.output.at(0, c), long_dec.output.at(0, c));
}

TEST(ConceptModel, PredictionEdgeCases) {
  const auto toy = ectg::testing::load_toy();
  ConceptModel model(toy.vocab, toy.graph, ectg::testing::tiny_concept_config(), 3);
  ConceptExample empty = toy.examples[0];
  for (auto& s : empty.concept_sets) s.clear();
  EXPECT_TRUE(predict_concepts(model, empty, 5).empty());
  for (const auto& ex : toy.examples) EXPECT_LE(predict_concepts(model, ex, 1).size(), 1u);
}

TEST(ConceptModel, UnreachableGoldLeavesThePrefix) {
  const auto toy = ectg::testing::load_toy();
  const ConceptModel model(toy.vocab, toy.graph, ectg::testing::tiny_concept_config(), 3);
  std::size_t checked = 0;
  for (const auto& ex : toy.examples) {
    const auto reach = reachable_gold(toy.graph, ex);
    if (reach.empty() || reach.size() == ex.gold.size()) continue;
    // every reachable concept is a candidate tail, the rest are not
    std::vector<std::size_t> tails;
    for (const auto& c : model.candidates(ex, {})) tails.insert(tails.end(), c.tails.begin(), c.tails.end());
    for (auto v : ex.gold) {
      const bool in_tails = std::find(tails.begin(), tails.end(), v) != tails.end();
      const bool kept = std::find(reach.begin(), reach.end(), v) != reach.end();
      EXPECT_EQ(in_tails, kept) << toy.graph.name(v);
    }
    ConceptExample trimmed = ex;
    trimmed.gold = reach;
    Rng a(5), b(5);
    const ConceptLosses full = concept_losses(model, ex, a);
    const ConceptLosses cut = concept_losses(model, trimmed, b);
    EXPECT_EQ(full.l_c.item(), cut.l_c.item()) << ex.id;
    EXPECT_EQ(full.l_g.item(), cut.l_g.item()) << ex.id;
    EXPECT_EQ(full.scored, cut.scored);
    EXPECT_EQ(full.skipped, cut.skipped + (ex.gold.size() - reach.size()));
    ++checked;
  }
  EXPECT_GT(checked, 0u);
}

TEST(ConceptModel, CheckpointRoundTrip) {
  const auto toy = ectg::testing::load_toy();
  ConceptModel model(toy.vocab, toy.graph, ectg::testing::tiny_concept_config(), 3);
  const ConceptModel back = ConceptModel::from_checkpoint(model.to_checkpoint(3));
  EXPECT_EQ(back.graph(), model.graph());
  Rng a(1), b(1);
  EXPECT_EQ(concept_losses(model, toy.examples[2], a).total.item(),
            concept_losses(back, toy.examples[2], b).total.item());
}

TEST(ConceptModel, OverfitsGirlfriendTransitions) {
  const auto gf = ectg::testing::load_toy(ectg::testing::kGirlfriendPath);
  auto cfg = ectg::testing::tiny_concept_config();
  cfg.encoder.d_model = 16;
  ConceptModel model(gf.vocab, gf.graph, cfg, 11);
  const auto report = train_concept_model(model, gf.examples, {.steps = 400, .lr = 5e-3, .stop_below = 0.05});
  EXPECT_LT(report.last.l_c, 0.05);
  std::cout << "girlfriend overfit: " << report.steps << " updates\n";
  for (const auto& ex : gf.examples) {
    const auto got = predict_concepts(model, ex, 5);
    EXPECT_FALSE(got.empty());
    for (const auto& c : got) EXPECT_TRUE(c == "love" || c == "together") << c;
  }
}

// Sixteen fixture exchanges memorized to L_c < 0.05.
TEST(ConceptModel, MemorizesSixteenExamples) {
  const auto toy = ectg::testing::load_toy();
  ConceptModelConfig cfg;
  ConceptModel model(toy.vocab, toy.graph, cfg, 7);
  std::vector<ConceptExample> set;
  for (const auto& ex : toy.examples) {
    if (set.size() < 16 && !ex.gold.empty() && !model.candidates(ex, {}).empty()) set.push_back(ex);
  }
  ASSERT_EQ(set.size(), 16u);
  const auto report = train_concept_model(model, set, {.steps = 3000, .lr = 1e-3, .seed = 7, .stop_below = 0.05});
  std::cout << "concept memorization: " << report.steps << " updates, L_c " << report.last.l_c << "\n";
  EXPECT_LT(report.last.l_c, 0.05);
  EXPECT_LE(report.steps, 3000u);
}
