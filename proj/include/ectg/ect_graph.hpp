#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ectg/cause_analysis.hpp"
#include "ectg/corpus.hpp"

namespace ectg {

class GraphError : public Error {
 public:
  using Error::Error;
};

/// Head/tail/joint counts over observed concept transitions.
struct CooccurrenceCounts {
  std::uint64_t total = 0;
  std::map<std::string, std::uint64_t> head;
  std::map<std::string, std::uint64_t> tail;
  std::map<std::pair<std::string, std::string>, std::uint64_t> joint;

  void add(const std::string& h, const std::string& t);
  void merge(const CooccurrenceCounts& other);
  std::uint64_t joint_count(const std::string& h, const std::string& t) const;
  bool operator==(const CooccurrenceCounts&) const = default;
};

/// Concepts of utterance i of a dialogue.
using ConceptExtractor = std::function<std::vector<std::string>(const Dialogue&, std::size_t)>;

/// Counts every (concept of U_i) x (concept of U_i+1) where U_i+1 is a listener turn.
CooccurrenceCounts collect_transitions(const std::vector<Dialogue>& dialogues,
                                       const ConceptExtractor& concepts);
CooccurrenceCounts collect_transitions(const std::vector<Dialogue>& dialogues,
                                       const SpanSource& source);

/// Natural-log PMI over the pair population; -inf when the pair was never seen.
/// Throws when total is 0.
double pmi(const CooccurrenceCounts& counts, const std::string& h, const std::string& t);

struct GraphEdge {
  std::size_t head = 0;
  std::size_t tail = 0;
  double pmi = 0.0;
  std::uint64_t count = 0;
  bool operator==(const GraphEdge&) const = default;
};

/// Directed concept transition graph. Vertices are sorted, edges sorted by
/// (head, tail), so the out-edges of a vertex are one contiguous run.
class EctGraph {
 public:
  EctGraph() = default;
  /// Validates ordering, endpoints and uniqueness.
  EctGraph(std::vector<std::string> vertices, std::vector<GraphEdge> edges);

  const std::vector<std::string>& vertices() const { return vertices_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }
  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  bool empty() const { return vertices_.empty(); }

  std::optional<std::size_t> find(std::string_view label) const;
  bool contains(std::string_view label) const { return find(label).has_value(); }
  const std::string& name(std::size_t v) const { return vertices_.at(v); }
  std::span<const GraphEdge> out_edges(std::size_t v) const;

  bool operator==(const EctGraph& o) const { return vertices_ == o.vertices_ && edges_ == o.edges_; }

 private:
  std::vector<std::string> vertices_;
  std::vector<GraphEdge> edges_;
  std::vector<std::size_t> first_edge_;  // vertex -> offset into edges_, size V+1
};

/// Keeps pairs with joint >= min_count and pmi >= threshold.
EctGraph build_graph(const CooccurrenceCounts& counts, double pmi_threshold = 0.0,
                     std::uint64_t min_count = 2);

struct Subgraph {
  std::size_t head = 0;
  std::vector<std::size_t> tails;  // graph edge order
};

/// One subgraph per concept of cs with at least one out-edge, in cs order.
std::vector<Subgraph> retrieve_subgraphs(const EctGraph& graph, const std::vector<std::string>& cs);

inline constexpr int kGraphFormatVersion = 1;

std::string save_graph(const EctGraph& graph);
EctGraph load_graph(std::string_view bytes);
void save_graph_file(const EctGraph& graph, const std::filesystem::path& path);
EctGraph load_graph_file(const std::filesystem::path& path);

std::string save_counts(const CooccurrenceCounts& counts);
CooccurrenceCounts load_counts(std::string_view bytes);

}  // namespace ectg
