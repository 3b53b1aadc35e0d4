#include "ectg/ect_graph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "ectg/fileio.hpp"

namespace ectg {

using nlohmann::json;

void CooccurrenceCounts::add(const std::string& h, const std::string& t) {
  ++total;
  ++head[h];
  ++tail[t];
  ++joint[{h, t}];
}

void CooccurrenceCounts::merge(const CooccurrenceCounts& other) {
  total += other.total;
  for (const auto& [k, v] : other.head) head[k] += v;
  for (const auto& [k, v] : other.tail) tail[k] += v;
  for (const auto& [k, v] : other.joint) joint[k] += v;
}

std::uint64_t CooccurrenceCounts::joint_count(const std::string& h, const std::string& t) const {
  const auto it = joint.find({h, t});
  return it == joint.end() ? 0 : it->second;
}

CooccurrenceCounts collect_transitions(const std::vector<Dialogue>& dialogues,
                                       const ConceptExtractor& concepts) {
  CooccurrenceCounts counts;
  for (const auto& d : dialogues) {
    for (std::size_t i = 0; i + 1 < d.utterances.size(); ++i) {
      if (d.utterances[i + 1].speaker != Role::kListener) continue;
      const auto heads = concepts(d, i);
      if (heads.empty()) continue;
      const auto tails = concepts(d, i + 1);
      for (const auto& h : heads) {
        for (const auto& t : tails) counts.add(h, t);
      }
    }
  }
  return counts;
}

CooccurrenceCounts collect_transitions(const std::vector<Dialogue>& dialogues,
                                       const SpanSource& source) {
  return collect_transitions(dialogues, [&source](const Dialogue& d, std::size_t i) {
    return utterance_concepts(source, d, i);
  });
}

double pmi(const CooccurrenceCounts& counts, const std::string& h, const std::string& t) {
  if (counts.total == 0) throw GraphError("pmi: no transitions were counted");
  const std::uint64_t j = counts.joint_count(h, t);
  if (j == 0) return -std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(counts.total);
  const double ph = static_cast<double>(counts.head.at(h)) / n;
  const double pt = static_cast<double>(counts.tail.at(t)) / n;
  return std::log((static_cast<double>(j) / n) / (ph * pt));
}

EctGraph::EctGraph(std::vector<std::string> vertices, std::vector<GraphEdge> edges)
    : vertices_(std::move(vertices)), edges_(std::move(edges)) {
  for (std::size_t i = 1; i < vertices_.size(); ++i) {
    if (!(vertices_[i - 1] < vertices_[i])) {
      throw GraphError("graph vertices must be sorted and unique (at '" + vertices_[i] + "')");
    }
  }
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const auto& e = edges_[i];
    if (e.head >= vertices_.size() || e.tail >= vertices_.size()) {
      throw GraphError("graph edge " + std::to_string(i) + " points outside the vertex table");
    }
    if (!std::isfinite(e.pmi)) throw GraphError("graph edge " + std::to_string(i) + " has non-finite pmi");
    if (i > 0) {
      const auto& p = edges_[i - 1];
      if (std::pair(p.head, p.tail) >= std::pair(e.head, e.tail)) {
        throw GraphError("graph edges must be sorted by (head, tail) without duplicates");
      }
    }
  }
  first_edge_.assign(vertices_.size() + 1, 0);
  for (const auto& e : edges_) ++first_edge_[e.head + 1];
  for (std::size_t v = 0; v < vertices_.size(); ++v) first_edge_[v + 1] += first_edge_[v];
}

std::optional<std::size_t> EctGraph::find(std::string_view label) const {
  const auto it = std::lower_bound(vertices_.begin(), vertices_.end(), label,
                                   [](const std::string& a, std::string_view b) { return a < b; });
  if (it == vertices_.end() || *it != label) return std::nullopt;
  return static_cast<std::size_t>(it - vertices_.begin());
}

std::span<const GraphEdge> EctGraph::out_edges(std::size_t v) const {
  if (v >= vertices_.size()) throw GraphError("vertex id out of range");
  return std::span<const GraphEdge>(edges_).subspan(first_edge_[v], first_edge_[v + 1] - first_edge_[v]);
}

EctGraph build_graph(const CooccurrenceCounts& counts, double pmi_threshold,
                     std::uint64_t min_count) {
  if (counts.total == 0) return {};
  std::vector<std::tuple<std::string, std::string, double, std::uint64_t>> kept;
  for (const auto& [pair, c] : counts.joint) {
    if (c < min_count) continue;
    const double v = pmi(counts, pair.first, pair.second);
    if (v >= pmi_threshold) kept.emplace_back(pair.first, pair.second, v, c);
  }
  std::vector<std::string> vertices;
  for (const auto& k : kept) {
    vertices.push_back(std::get<0>(k));
    vertices.push_back(std::get<1>(k));
  }
  std::sort(vertices.begin(), vertices.end());
  vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
  const auto index = [&vertices](const std::string& s) {
    return static_cast<std::size_t>(std::lower_bound(vertices.begin(), vertices.end(), s) -
                                    vertices.begin());
  };
  // joint is a map keyed by (head, tail), so kept is already in edge order
  std::vector<GraphEdge> edges;
  for (const auto& [h, t, v, c] : kept) edges.push_back({index(h), index(t), v, c});
  return EctGraph(std::move(vertices), std::move(edges));
}

std::vector<Subgraph> retrieve_subgraphs(const EctGraph& graph, const std::vector<std::string>& cs) {
  std::vector<Subgraph> out;
  for (const auto& c : cs) {
    const auto v = graph.find(c);
    if (!v) continue;
    const auto edges = graph.out_edges(*v);
    if (edges.empty()) continue;
    Subgraph g{*v, {}};
    for (const auto& e : edges) g.tails.push_back(e.tail);
    out.push_back(std::move(g));
  }
  return out;
}

std::string save_graph(const EctGraph& graph) {
  json edges = json::array();
  for (const auto& e : graph.edges()) edges.push_back({e.head, e.tail, e.pmi, e.count});
  json j = {{"version", kGraphFormatVersion}, {"vertices", graph.vertices()}, {"edges", edges}};
  return j.dump() + "\n";
}

EctGraph load_graph(std::string_view bytes) {
  const auto first = std::find_if(bytes.begin(), bytes.end(),
                                  [](char c) { return !std::isspace(static_cast<unsigned char>(c)); });
  if (first == bytes.end() || *first != '{') throw GraphError("not an ECT graph file");
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::exception&) {
    throw GraphError("truncated or malformed ECT graph file");
  }
  if (!j.is_object() || !j.contains("version")) throw GraphError("not an ECT graph file");
  if (j["version"] != kGraphFormatVersion) {
    throw GraphError("unsupported ECT graph version " + j["version"].dump() + " (expected " +
                     std::to_string(kGraphFormatVersion) + ")");
  }
  try {
    std::vector<std::string> vertices = j.at("vertices").get<std::vector<std::string>>();
    std::vector<GraphEdge> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 4) throw GraphError("malformed ECT graph edge " + e.dump());
      edges.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>(), e[2].get<double>(),
                       e[3].get<std::uint64_t>()});
    }
    return EctGraph(std::move(vertices), std::move(edges));
  } catch (const json::exception& ex) {
    throw GraphError(std::string("malformed ECT graph file: ") + ex.what());
  }
}

void save_graph_file(const EctGraph& graph, const std::filesystem::path& path) {
  write_file(path, save_graph(graph));
}

EctGraph load_graph_file(const std::filesystem::path& path) { return load_graph(read_file(path)); }

std::string save_counts(const CooccurrenceCounts& counts) {
  json joint = json::array();
  for (const auto& [k, v] : counts.joint) joint.push_back({k.first, k.second, v});
  json j = {{"version", kGraphFormatVersion},
            {"total", counts.total},
            {"head", counts.head},
            {"tail", counts.tail},
            {"joint", joint}};
  return j.dump() + "\n";
}

CooccurrenceCounts load_counts(std::string_view bytes) {
  try {
    const json j = json::parse(bytes);
    if (j.at("version") != kGraphFormatVersion) throw GraphError("unsupported counts version");
    CooccurrenceCounts c;
    c.total = j.at("total").get<std::uint64_t>();
    c.head = j.at("head").get<std::map<std::string, std::uint64_t>>();
    c.tail = j.at("tail").get<std::map<std::string, std::uint64_t>>();
    for (const auto& e : j.at("joint")) {
      c.joint[{e.at(0).get<std::string>(), e.at(1).get<std::string>()}] = e.at(2).get<std::uint64_t>();
    }
    return c;
  } catch (const json::exception& ex) {
    throw GraphError(std::string("malformed counts file: ") + ex.what());
  }
}

}  // namespace ectg
