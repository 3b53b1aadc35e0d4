#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "ectg/ect_graph.hpp"
#include "ectg/rng.hpp"
#include "oracles.hpp"

using namespace ectg;

namespace {

const std::string kToy = std::string(ECTG_FIXTURE_DIR) + "/toy_corpus.jsonl";
const std::string kGirlfriend = std::string(ECTG_FIXTURE_DIR) + "/girlfriend_mini.jsonl";

using ectg::testing::graph_edges;
using ectg::testing::oracle_edges;
using ectg::testing::recount;

}  // namespace

TEST(Transitions, GirlfriendExample) {
  const auto ds = load_corpus(kGirlfriend);
  const auto c = collect_transitions({ds[0]}, SpanSource{});
  EXPECT_EQ(c.joint_count("girlfriend", "love"), 1u);
  EXPECT_EQ(c.joint_count("girlfriend", "together"), 1u);
  EXPECT_EQ(c.total, 2u);
}

TEST(Transitions, EmptyConceptSetsAddNothing) {
  const auto ds = parse_corpus(
      R"({"id":"e","emotion":"sad","utterances":[{"speaker":"speaker","text":"and the of","cause_spans":[[0,2]]},{"speaker":"listener","text":"dog","cause_spans":[[0,0]]}]})");
  EXPECT_EQ(collect_transitions(ds, SpanSource{}).total, 0u);
}

TEST(Pmi, HandValues) {
  CooccurrenceCounts c;
  c.add("h", "t");
  EXPECT_EQ(pmi(c, "h", "t"), 0.0);
  EXPECT_EQ(pmi(c, "h", "x"), -std::numeric_limits<double>::infinity());
  CooccurrenceCounts d;
  d.add("h", "t");
  d.add("h", "t");
  d.add("a", "b");
  d.add("c", "e");
  EXPECT_NEAR(pmi(d, "h", "t"), std::log(2.0), 1e-12);
  EXPECT_THROW(pmi(CooccurrenceCounts{}, "h", "t"), GraphError);
}

TEST(Graph, ToyCorpusMatchesBruteForce) {
  const auto ds = load_corpus(kToy);
  const SpanSource src;
  const auto counts = collect_transitions(ds, src);
  const auto r = recount(ds, src);
  EXPECT_EQ(counts.total, r.pairs.size());
  for (const auto& [thr, mc] : std::vector<std::pair<double, std::uint64_t>>{
           {0.0, 1}, {0.0, 2}, {-std::numeric_limits<double>::infinity(), 1}, {1.5, 1}}) {
    const auto g = build_graph(counts, thr, mc);
    const auto expect = oracle_edges(r, thr, mc);
    EXPECT_EQ(graph_edges(g), expect);
    std::vector<std::string> verts;
    for (const auto& e : expect) {
      verts.push_back(std::get<0>(e));
      verts.push_back(std::get<1>(e));
    }
    std::sort(verts.begin(), verts.end());
    verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
    EXPECT_EQ(g.vertices(), verts);
  }
  EXPECT_GT(build_graph(counts, 0.0, 2).edge_count(), 5u);
  EXPECT_TRUE(build_graph(counts, std::numeric_limits<double>::infinity(), 1).empty());
}

TEST(Graph, StoredPmiMatchesSidecar) {
  const auto counts = collect_transitions(load_corpus(kToy), SpanSource{});
  const auto g = build_graph(counts, 0.0, 1);
  const auto back = load_counts(save_counts(counts));
  EXPECT_EQ(back, counts);
  for (const auto& e : g.edges()) {
    EXPECT_NEAR(pmi(back, g.name(e.head), g.name(e.tail)), e.pmi, 1e-9);
    EXPECT_EQ(back.joint_count(g.name(e.head), g.name(e.tail)), e.count);
  }
  EXPECT_EQ(save_graph(build_graph(counts, 0.0, 2)), save_graph(build_graph(counts, 0.0, 2)));
}

TEST(Graph, WholeUtteranceSourceChangesEdges) {
  const auto ds = load_corpus(kToy);
  const auto a = build_graph(collect_transitions(ds, SpanSource{}), 0.0, 2);
  const auto b = build_graph(collect_transitions(ds, SpanSource{.use_gold = false, .whole_utterance = true}), 0.0, 2);
  EXPECT_NE(graph_edges(a), graph_edges(b));
}

TEST(Subgraphs, GirlfriendExample) {
  const auto g = build_graph(collect_transitions(load_corpus(kGirlfriend), SpanSource{}), 0.0, 2);
  EXPECT_TRUE(retrieve_subgraphs(g, {}).empty());
  const auto sg = retrieve_subgraphs(g, {"girlfriend"});
  ASSERT_EQ(sg.size(), 1u);
  EXPECT_EQ(g.name(sg[0].head), "girlfriend");
  std::vector<std::string> tails;
  for (auto t : sg[0].tails) tails.push_back(g.name(t));
  EXPECT_EQ(tails, (std::vector<std::string>{"love", "together"}));
  EXPECT_TRUE(retrieve_subgraphs(g, {"love", "unknown"}).empty());
}

TEST(Subgraphs, RandomGraphsMatchLinearScan) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    CooccurrenceCounts c;
    const auto n = 1 + rng.below(40);
    for (std::uint64_t i = 0; i < n; ++i) {
      c.add("c" + std::to_string(rng.below(8)), "c" + std::to_string(rng.below(8)));
    }
    const auto g = build_graph(c, -std::numeric_limits<double>::infinity(), 1);
    std::vector<std::string> cs;
    for (auto k = rng.below(5); k > 0; --k) cs.push_back("c" + std::to_string(rng.below(10)));
    const auto got = retrieve_subgraphs(g, cs);
    std::size_t gi = 0;
    for (const auto& h : cs) {
      std::vector<std::size_t> tails;
      for (const auto& e : g.edges()) {
        if (g.name(e.head) == h) tails.push_back(e.tail);
      }
      if (tails.empty()) continue;
      ASSERT_LT(gi, got.size());
      EXPECT_EQ(g.name(got[gi].head), h);
      EXPECT_EQ(got[gi].tails, tails);
      ++gi;
    }
    EXPECT_EQ(gi, got.size());
  }
}

TEST(GraphFile, RoundTripAndErrors) {
  EXPECT_EQ(load_graph(save_graph(EctGraph{})), EctGraph{});
  const auto g = build_graph(collect_transitions(load_corpus(kToy), SpanSource{}), 0.0, 1);
  EXPECT_EQ(load_graph(save_graph(g)), g);
  try {
    load_graph("XXXX" + save_graph(g));
    FAIL();
  } catch (const GraphError& e) {
    EXPECT_STREQ(e.what(), "not an ECT graph file");
  }
  const auto bytes = save_graph(g);
  EXPECT_THROW(load_graph(bytes.substr(0, bytes.size() / 2)), GraphError);
  std::string v2 = bytes;
  v2.replace(v2.find("\"version\":1"), 11, "\"version\":2");
  try {
    load_graph(v2);
    FAIL();
  } catch (const GraphError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}
