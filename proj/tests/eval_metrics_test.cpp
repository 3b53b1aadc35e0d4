#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ectg/eval_metrics.hpp"
#include "ectg/fileio.hpp"

using namespace ectg;

namespace {

Sentence words(const std::string& s) {
  Sentence out;
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t j = std::min(s.find(' ', i), s.size());
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

struct Fixture {
  std::vector<Sentence> hyps, refs;
};

Fixture fixture() {
  const auto j = nlohmann::json::parse(read_file(std::string(ECTG_FIXTURE_DIR) + "/metrics_fixture.json"));
  Fixture f;
  for (const auto& h : j.at("hypotheses")) f.hyps.push_back(words(h.get<std::string>()));
  for (const auto& r : j.at("references")) f.refs.push_back(words(r.get<std::string>()));
  return f;
}

}  // namespace

TEST(Bleu, PerfectAndDisjoint) {
  const std::vector<Sentence> s{words("i am so happy for you")};
  EXPECT_NEAR(bleu4(s, s), 100.0, 1e-12);
  const double floor = bleu4({words("a b c d")}, {words("e f g h")});
  EXPECT_NEAR(floor, 100.0 * 1e-9, 1e-15);
  EXPECT_THROW(bleu4({}, {}), MetricError);
  EXPECT_THROW(bleu4({words("a")}, {}), MetricError);
}

TEST(Bleu, HandCountedPair) {
  // p1 = 5/6, p2 = 3/5, p3 = 1/4, p4 = 0 -> eps; equal lengths so BP = 1
  const double expect = 100.0 * std::pow(5.0 / 6.0 * 3.0 / 5.0 * 1.0 / 4.0 * 1e-9, 0.25);
  EXPECT_NEAR(bleu4({words("the cat sat on the mat")}, {words("the cat is on the mat")}), expect, 1e-12);
  // shorter hypothesis: BP = exp(1 - 6/4)
  const double bp = std::exp(1.0 - 6.0 / 4.0);
  EXPECT_NEAR(bleu4({words("the cat is on")}, {words("the cat is on the mat")}), 100.0 * bp, 1e-9);
}

TEST(Distinct, HandValues) {
  EXPECT_NEAR(distinct_n({words("a a a")}, 1), 100.0 / 3.0, 1e-12);
  EXPECT_NEAR(distinct_n({words("a b"), words("a b")}, 2), 50.0, 1e-12);
  EXPECT_NEAR(distinct_n({words("a b c d")}, 1), 100.0, 1e-12);
  EXPECT_EQ(distinct_n({words("a")}, 2), 0.0);
  EXPECT_EQ(distinct_n({}, 1), 0.0);
}

TEST(Distinct, NonIncreasingWhenDuplicateAppended) {
  std::mt19937 gen(4);
  const std::vector<std::string> pool{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Sentence> hyps;
    for (int k = 0; k < 1 + static_cast<int>(gen() % 4); ++k) {
      Sentence s;
      for (int i = 0; i < 1 + static_cast<int>(gen() % 6); ++i) s.push_back(pool[gen() % pool.size()]);
      hyps.push_back(s);
    }
    for (std::size_t n = 1; n <= 2; ++n) {
      const double before = distinct_n(hyps, n);
      auto more = hyps;
      more.push_back(hyps[gen() % hyps.size()]);
      EXPECT_LE(distinct_n(more, n), before + 1e-12);
    }
  }
}

TEST(RougeL, HandValues) {
  EXPECT_NEAR(rouge_l(words("a b c"), words("a b c")), 100.0, 1e-12);
  EXPECT_EQ(rouge_l(words("a b"), words("c d")), 0.0);
  EXPECT_NEAR(rouge_l(words("a b c d"), words("a c d")), 100.0 * 2 * 0.75 / 1.75, 1e-12);
  EXPECT_NEAR(rouge_l(words("a b c d"), words("a c d")), 85.7142857142857, 1e-9);
  EXPECT_EQ(rouge_l(words("a"), Sentence{}), 0.0);
}

TEST(Cider, IdentityDisjointAndSingleExample) {
  const std::vector<Sentence> refs{words("i love my new puppy"), words("we went to the beach today"),
                                   words("the exam was really hard")};
  const double self = cider(refs, refs);
  EXPECT_GT(self, 0.0);
  // every example scores the same maximum on self-similarity
  for (std::size_t k = 0; k < refs.size(); ++k) {
    EXPECT_NEAR(cider({refs[k], refs[(k + 1) % 3]}, {refs[k], refs[(k + 1) % 3]}), 10.0, 1e-9);
  }
  const std::vector<Sentence> other{words("x y z"), words("p q r"), words("u v w")};
  EXPECT_EQ(cider(other, refs), 0.0);
  try {
    cider({refs[0]}, {refs[0]});
    FAIL() << "expected MetricError";
  } catch (const MetricError& e) {
    EXPECT_NE(std::string(e.what()).find("IDF undefined"), std::string::npos);
  }
}

TEST(Metrics, MatchScriptedOracle) {
  // frozen output of tests/oracles/metrics_oracle.py on metrics_fixture.json
  const Fixture f = fixture();
  EXPECT_NEAR(bleu4({f.hyps[0]}, {f.refs[0]}), 0.334370152488211, 1e-12);
  EXPECT_NEAR(bleu4(f.hyps, f.refs), 26.7364291454198, 1e-10);
  EXPECT_NEAR(distinct_n(f.hyps, 1), 83.3333333333333, 1e-10);
  EXPECT_NEAR(distinct_n(f.hyps, 2), 95.2380952380952, 1e-10);
  EXPECT_NEAR(rouge_l(f.hyps, f.refs), 58.6111111111111, 1e-10);
  EXPECT_NEAR(cider(f.hyps, f.refs), 3.04387589290983, 1e-10);
  const EvalReport r = evaluate(f.hyps, f.refs);
  EXPECT_NEAR(r.cider, 304.387589290983, 1e-8);
  EXPECT_EQ(r.n_examples, 3u);
}

TEST(Metrics, PermutationInvariant) {
  const Fixture f = fixture();
  const EvalReport base = evaluate(f.hyps, f.refs);
  std::vector<std::size_t> order{0, 1, 2};
  while (std::next_permutation(order.begin(), order.end())) {
    Fixture g;
    for (std::size_t i : order) {
      g.hyps.push_back(f.hyps[i]);
      g.refs.push_back(f.refs[i]);
    }
    const EvalReport r = evaluate(g.hyps, g.refs);
    EXPECT_NEAR(r.bleu4, base.bleu4, 1e-12);
    EXPECT_NEAR(r.dist1, base.dist1, 1e-12);
    EXPECT_NEAR(r.dist2, base.dist2, 1e-12);
    EXPECT_NEAR(r.rouge_l, base.rouge_l, 1e-12);
    EXPECT_NEAR(r.cider, base.cider, 1e-10);
  }
}

TEST(Metrics, MaximalAtReferences) {
  const Fixture f = fixture();
  const EvalReport best = evaluate(f.refs, f.refs);
  const EvalReport got = evaluate(f.hyps, f.refs);
  EXPECT_NEAR(best.bleu4, 100.0, 1e-9);
  EXPECT_NEAR(best.rouge_l, 100.0, 1e-12);
  EXPECT_GE(best.cider, got.cider);
  EXPECT_GE(best.bleu4, got.bleu4);
  EXPECT_GE(best.rouge_l, got.rouge_l);
}

TEST(EvalReport, JsonAndTable) {
  const Fixture f = fixture();
  const EvalReport r = evaluate(f.hyps, f.refs);
  const auto j = r.to_json();
  EXPECT_EQ(j.at("n_examples"), 3);
  EXPECT_DOUBLE_EQ(j.at("bleu4").get<double>(), r.bleu4);
  const std::string t = r.table("full");
  const std::size_t b4 = t.find("B-4"), d1 = t.find("Dist-1"), d2 = t.find("Dist-2"), rl = t.find("R-L"),
                    ci = t.find("CIDEr");
  ASSERT_NE(b4, std::string::npos);
  EXPECT_LT(b4, d1);
  EXPECT_LT(d1, d2);
  EXPECT_LT(d2, rl);
  EXPECT_LT(rl, ci);
  EXPECT_NE(t.find("26.74"), std::string::npos);
}
