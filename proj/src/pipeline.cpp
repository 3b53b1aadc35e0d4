#include "ectg/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "ectg/ect_graph.hpp"
#include "ectg/fileio.hpp"
#include "ectg/nn/optim.hpp"

namespace ectg {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  const auto bad = [&] { return ConfigError("config: bad value '" + text + "' for " + key); };
  if constexpr (std::is_same_v<T, std::string>) {
    return text;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw bad();
  } else {
    T v{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) throw bad();
    if constexpr (std::is_floating_point_v<T>) {
      if (!std::isfinite(v)) throw bad();
    }
    return v;
  }
}

template <class T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    return std::to_string(v);
  }
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> put;
};

template <class T>
Field field(std::string key, T RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return format_value(c.*member); },
          [member, key](RunConfig& c, const std::string& v) { c.*member = parse_value<T>(key, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f{
        field("corpus", &RunConfig::corpus),
        field("eval_corpus", &RunConfig::eval_corpus),
        field("out_dir", &RunConfig::out_dir),
        field("graph", &RunConfig::graph),
        field("span_ckpt", &RunConfig::span_ckpt),
        field("concept_ckpt", &RunConfig::concept_ckpt),
        field("generator_ckpt", &RunConfig::generator_ckpt),
        field("d_model", &RunConfig::d_model),
        field("heads", &RunConfig::heads),
        field("ff_mult", &RunConfig::ff_mult),
        field("layers", &RunConfig::layers),
        field("context_layers", &RunConfig::context_layers),
        field("d_gru", &RunConfig::d_gru),
        field("max_concepts", &RunConfig::max_concepts),
        field("dropout", &RunConfig::dropout),
        field("pmi_threshold", &RunConfig::pmi_threshold),
        field("min_count", &RunConfig::min_count),
        field("min_freq", &RunConfig::min_freq),
        field("lr", &RunConfig::lr),
        field("r", &RunConfig::r),
        field("batch_size", &RunConfig::batch_size),
        field("span_steps", &RunConfig::span_steps),
        field("concept_steps", &RunConfig::concept_steps),
        field("generator_steps", &RunConfig::generator_steps),
        field("checkpoint_every", &RunConfig::checkpoint_every),
        field("span_stop_exact", &RunConfig::span_stop_exact),
        field("concept_stop_below", &RunConfig::concept_stop_below),
        field("generator_stop_exact", &RunConfig::generator_stop_exact),
        field("max_len", &RunConfig::max_len),
        field("max_src_len", &RunConfig::max_src_len),
        field("top_k", &RunConfig::top_k),
        field("gold_spans", &RunConfig::gold_spans),
        field("emotion", &RunConfig::emotion),
        field("no_copy", &RunConfig::no_copy),
        field("no_seca", &RunConfig::no_seca),
        field("no_graph", &RunConfig::no_graph),
    };
    f.push_back({"seed",
                 [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string(); },
                 [](RunConfig& c, const std::string& v) { c.seed = parse_value<std::uint64_t>("seed", v); }});
    std::sort(f.begin(), f.end(), [](const Field& a, const Field& b) { return a.key < b.key; });
    return f;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string in_dir(const RunConfig& cfg, const std::string& explicit_path, const char* name) {
  return explicit_path.empty() ? (fs::path(cfg.out_dir) / name).string() : explicit_path;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw MissingInputError(what + ": no path given");
  if (!fs::is_regular_file(path)) throw MissingInputError(what + " not found: " + path);
}

void save_ckpt(const nn::Checkpoint& c, const std::string& path) {
  std::ostringstream bytes;
  nn::write_checkpoint(c, bytes);
  write_file(path, bytes.str());
}

nn::Checkpoint load_ckpt(const std::string& path, const std::string& what) {
  require_file(path, what);
  return nn::load_checkpoint(path);
}

std::vector<Dialogue> load_dialogues(const std::string& path) {
  require_file(path, "corpus");
  return load_corpus(path);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.put(*this, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

std::map<std::string, std::string> RunConfig::values() const {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.key] = f.get(*this);
  return out;
}

void RunConfig::validate() const {
  if (!seed) throw ConfigError("config: seed is required");
  const std::pair<const char*, std::size_t> sizes[] = {
      {"d_model", d_model}, {"heads", heads},       {"ff_mult", ff_mult},         {"layers", layers},
      {"context_layers", context_layers}, {"d_gru", d_gru}, {"max_concepts", max_concepts},
      {"min_freq", min_freq}, {"max_len", max_len}, {"max_src_len", max_src_len}, {"min_count", min_count}};
  for (const auto& [k, v] : sizes) {
    if (v == 0) throw ConfigError(std::string("config: ") + k + " must be positive");
  }
  if (d_model % heads != 0) throw ConfigError("config: d_model must be a multiple of heads");
  if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (!(r > 0.0)) throw ConfigError("config: r must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout must be in [0, 1)");
}

std::string RunConfig::graph_path() const { return in_dir(*this, graph, "graph.json"); }
std::string RunConfig::span_ckpt_path() const { return in_dir(*this, span_ckpt, "span.ckpt"); }
std::string RunConfig::concept_ckpt_path() const { return in_dir(*this, concept_ckpt, "concept.ckpt"); }
std::string RunConfig::generator_ckpt_path() const { return in_dir(*this, generator_ckpt, "generator.ckpt"); }

std::uint64_t RunConfig::seed_value() const {
  if (!seed) throw ConfigError("config: seed is required");
  return *seed;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  require_file(path, "config file");
  return parse_config(read_file(path), std::move(base));
}

// ---------------------------------------------------------------- manifest

std::string git_blob_sha1(std::string_view bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) && EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("sha1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

RunManifest::RunManifest(std::string command, const RunConfig& cfg) : command_(std::move(command)), cfg_(cfg) {}

void RunManifest::input(const std::string& path) { inputs_[path] = git_blob_sha1(read_file(path)); }
void RunManifest::output(const std::string& path) { outputs_[path] = git_blob_sha1(read_file(path)); }

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["config"] = cfg_.values();
  j["inputs"] = inputs_;
  j["outputs"] = outputs_;
  return j;
}

std::string RunManifest::write() const {
  const std::string path = (fs::path(cfg_.out_dir) / ("manifest-" + command_ + ".json")).string();
  write_file(path, to_json().dump(2) + "\n");
  return path;
}

// ---------------------------------------------------------------- build-graph

namespace {

SpanSource training_source(const RunConfig& cfg) {
  SpanSource s;
  s.whole_utterance = cfg.no_seca;
  return s;
}

std::string pmi_histogram(const EctGraph& g) {
  if (g.edges().empty()) return "pmi histogram: no edges\n";
  double lo = g.edges().front().pmi, hi = lo;
  for (const auto& e : g.edges()) {
    lo = std::min(lo, e.pmi);
    hi = std::max(hi, e.pmi);
  }
  constexpr double kWidth = 0.5;
  const double start = std::floor(lo / kWidth) * kWidth;
  const std::size_t bins = static_cast<std::size_t>(std::floor((hi - start) / kWidth)) + 1;
  std::vector<std::size_t> counts(bins, 0);
  for (const auto& e : g.edges()) {
    counts[std::min(bins - 1, static_cast<std::size_t>(std::floor((e.pmi - start) / kWidth)))]++;
  }
  std::string out = "pmi histogram:\n";
  char buf[128];
  for (std::size_t b = 0; b < bins; ++b) {
    std::snprintf(buf, sizeof buf, "  [%6.2f, %6.2f) %5zu ", start + kWidth * static_cast<double>(b),
                  start + kWidth * static_cast<double>(b + 1), counts[b]);
    out += buf;
    out += std::string(std::min<std::size_t>(counts[b], 60), '#');
    out += "\n";
  }
  return out;
}

}  // namespace

GraphSummary cmd_build_graph(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto dialogues = load_dialogues(cfg.corpus);
  if (dialogues.empty()) log << "warning: corpus " << cfg.corpus << " is empty; the graph will be empty\n";
  const CooccurrenceCounts counts = collect_transitions(dialogues, training_source(cfg));
  const EctGraph graph = counts.total == 0 ? EctGraph{} : build_graph(counts, cfg.pmi_threshold, cfg.min_count);
  const std::string path = cfg.graph_path();
  save_graph_file(graph, path);

  RunManifest m("build-graph", cfg);
  m.input(cfg.corpus);
  m.output(path);
  m.write();

  GraphSummary s{graph.vertex_count(), graph.edge_count(), ""};
  s.text = "graph " + path + "\nvertices " + std::to_string(s.vertices) + "\nedges " +
           std::to_string(s.edges) + "\n" + pmi_histogram(graph);
  return s;
}

// ---------------------------------------------------------------- train

Stage parse_stage(const std::string& s) {
  if (s == "spans") return Stage::kSpans;
  if (s == "concepts") return Stage::kConcepts;
  if (s == "generator") return Stage::kGenerator;
  if (s == "all") return Stage::kAll;
  throw ConfigError("unknown stage '" + s + "' (expected spans, concepts, generator or all)");
}

namespace {

SpanModelConfig span_config(const RunConfig& c) {
  return {.d_model = c.d_model, .heads = c.heads, .layers = c.layers, .ff_mult = c.ff_mult, .dropout = c.dropout};
}

ConceptModelConfig concept_config(const RunConfig& c) {
  ConceptModelConfig m;
  m.encoder = {.d_model = c.d_model, .heads = c.heads, .ff_mult = c.ff_mult, .utterance_layers = c.layers,
               .context_layers = c.context_layers, .d_gru = c.d_gru, .dropout = c.dropout};
  m.decoder_layers = c.layers;
  m.max_concepts = c.max_concepts;
  m.concept_weight = c.r;
  return m;
}

GeneratorConfig generator_config(const RunConfig& c) {
  return {.d_model = c.d_model, .heads = c.heads, .ff_mult = c.ff_mult, .encoder_layers = c.layers,
          .decoder_layers = c.layers, .max_src_len = c.max_src_len, .max_len = c.max_len,
          .dropout = c.dropout, .copy = !c.no_copy};
}

std::vector<std::string> sorted_emotions(const std::vector<Dialogue>& dialogues) {
  std::set<std::string> s;
  for (const auto& d : dialogues) s.insert(d.emotion);
  return {s.begin(), s.end()};
}

std::vector<std::string> names(const EctGraph& g, const std::vector<std::size_t>& ids) {
  std::vector<std::string> out;
  for (auto v : ids) out.push_back(g.name(v));
  return out;
}

class LossLog {
 public:
  explicit LossLog(std::string path) : path_(std::move(path)) { text_ = "stage,step,loss,l_g,l_c\n"; }
  void row(const char* stage, std::size_t step, double loss, std::optional<double> l_g = {},
           std::optional<double> l_c = {}) {
    text_ += std::string(stage) + "," + std::to_string(step) + "," + format_double(loss) + "," +
             (l_g ? format_double(*l_g) : "") + "," + (l_c ? format_double(*l_c) : "") + "\n";
  }
  void flush() const { write_file(path_, text_); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::string text_;
};

bool periodic(const RunConfig& cfg, std::size_t step) {
  return cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0;
}

}  // namespace

TrainSummary cmd_train(const RunConfig& cfg, Stage stage, std::ostream& log) {
  cfg.validate();
  const auto dialogues = load_dialogues(cfg.corpus);
  const Vocab vocab = build_vocab(dialogues, cfg.min_freq);
  const std::uint64_t seed = cfg.seed_value();
  fs::create_directories(cfg.out_dir);
  RunManifest manifest(std::string("train-") +
                           (stage == Stage::kAll ? "all" : stage == Stage::kSpans ? "spans"
                                                       : stage == Stage::kConcepts ? "concepts" : "generator"),
                       cfg);
  manifest.input(cfg.corpus);
  TrainSummary summary;
  const auto wants = [&](Stage s) { return stage == Stage::kAll || stage == s; };
  const auto exchanges = make_exchanges(dialogues);

  // The span model only matters when concepts come from predicted spans.
  if (wants(Stage::kSpans)) {
    if (cfg.no_seca || cfg.no_graph) {
      log << "span stage skipped (" << (cfg.no_seca ? "no_seca" : "no_graph") << ")\n";
    } else {
      SpanModel model(vocab, sorted_emotions(dialogues), span_config(cfg), seed);
      const auto examples = make_span_examples(model, dialogues);
      const std::string path = cfg.span_ckpt_path();
      LossLog csv((fs::path(cfg.out_dir) / "loss-spans.csv").string());
      save_ckpt(model.to_checkpoint(seed), path);
      try {
        const auto rep = train_span_model(model, examples,
                                          {.steps = cfg.span_steps, .lr = cfg.lr, .seed = seed,
                                           .batch_size = cfg.batch_size},
                                          cfg.span_stop_exact, [&](std::size_t step, double loss) {
                                            csv.row("spans", step, loss);
                                            if (periodic(cfg, step)) save_ckpt(model.to_checkpoint(seed), path);
                                          });
        summary.span_steps = rep.steps;
        summary.span_exact = rep.exact_match;
      } catch (const nn::NonFiniteError&) {
        csv.flush();
        throw;
      }
      save_ckpt(model.to_checkpoint(seed), path);
      csv.flush();
      manifest.output(path);
      manifest.output(csv.path());
      log << "spans: " << summary.span_steps << " steps, exact match " << summary.span_exact << " on "
          << examples.size() << " utterances\n";
    }
  }

  std::optional<EctGraph> graph;
  if (!cfg.no_graph && (wants(Stage::kConcepts) || wants(Stage::kGenerator))) {
    require_file(cfg.graph_path(), "graph (run build-graph first)");
    graph = load_graph_file(cfg.graph_path());
    manifest.input(cfg.graph_path());
  }
  // Targets always come from the annotated spans. Context concepts come from
  // wherever inference will take them, so training sees the same inputs.
  const SpanSource target_source = training_source(cfg);
  std::optional<SpanModel> span_model;
  SpanSource context_source = target_source;
  if (graph && !cfg.no_seca && !cfg.gold_spans) {
    span_model = SpanModel::from_checkpoint(load_ckpt(cfg.span_ckpt_path(), "span checkpoint (train spans first)"));
    manifest.input(cfg.span_ckpt_path());
    context_source.use_gold = false;
    context_source.model = &*span_model;
  }
  std::vector<ConceptExample> concept_examples;
  if (graph) {
    for (const auto& ex : exchanges) {
      ConceptExample ce = make_concept_example(vocab, *graph, context_source, *ex.dialogue, ex.response_index,
                                               cfg.max_concepts);
      ce.gold = concept_set(*graph, target_source, *ex.dialogue, ex.response_index, cfg.max_concepts);
      concept_examples.push_back(std::move(ce));
    }
  }

  if (wants(Stage::kConcepts)) {
    if (cfg.no_graph) {
      log << "concept stage skipped (no_graph)\n";
    } else {
      const auto& examples = concept_examples;
      ConceptModel model(vocab, *graph, concept_config(cfg), seed);
      const std::string path = cfg.concept_ckpt_path();
      LossLog csv((fs::path(cfg.out_dir) / "loss-concepts.csv").string());
      save_ckpt(model.to_checkpoint(seed), path);
      try {
        const auto rep = train_concept_model(
            model, examples,
            {.steps = cfg.concept_steps, .lr = cfg.lr, .seed = seed, .batch_size = cfg.batch_size,
             .stop_below = cfg.concept_stop_below},
            [&](const ConceptStep& s) {
              csv.row("concepts", s.step, s.total, s.l_g, s.l_c);
              if (periodic(cfg, s.step)) save_ckpt(model.to_checkpoint(seed), path);
            });
        summary.concept_steps = rep.steps;
        summary.concept_l_c = rep.last.l_c;
      } catch (const nn::NonFiniteError&) {
        csv.flush();
        throw;
      }
      save_ckpt(model.to_checkpoint(seed), path);
      csv.flush();
      manifest.output(path);
      manifest.output(csv.path());
      log << "concepts: " << summary.concept_steps << " updates, last L_c " << summary.concept_l_c << " on "
          << examples.size() << " examples\n";
    }
  }

  if (wants(Stage::kGenerator)) {
    std::vector<GeneratorExample> examples;
    std::size_t unknown = 0;
    for (std::size_t i = 0; i < exchanges.size(); ++i) {
      const auto& ex = exchanges[i];
      std::vector<std::string> concepts;
      // trained on what the concept predictor can actually emit
      if (graph) concepts = names(*graph, reachable_gold(*graph, concept_examples[i]));
      examples.push_back(make_generator_example(vocab, *ex.dialogue, ex.response_index, concepts, cfg.max_src_len));
      unknown += unknown_reference_tokens(vocab, examples.back().input, examples.back().reference, !cfg.no_copy).size();
    }
    if (unknown > 0) log << "warning: " << unknown << " reference tokens are trained as <unk>\n";
    GeneratorModel model(vocab, generator_config(cfg), seed);
    const std::string path = cfg.generator_ckpt_path();
    LossLog csv((fs::path(cfg.out_dir) / "loss-generator.csv").string());
    save_ckpt(model.to_checkpoint(seed), path);
    try {
      const auto rep = train_generator(
          model, examples, {.steps = cfg.generator_steps, .lr = cfg.lr, .seed = seed, .batch_size = cfg.batch_size},
          [&](std::size_t step, double loss) {
            csv.row("generator", step, loss);
            if (periodic(cfg, step)) save_ckpt(model.to_checkpoint(seed), path);
          },
          [&](std::size_t step) {
            return cfg.generator_stop_exact && step % 25 == 0 && exact_match_rate(model, examples) == 1.0;
          });
      summary.generator_steps = rep.steps;
      summary.generator_loss = rep.last_loss;
    } catch (const nn::NonFiniteError&) {
      csv.flush();
      throw;
    }
    save_ckpt(model.to_checkpoint(seed), path);
    csv.flush();
    manifest.output(path);
    manifest.output(csv.path());
    log << "generator: " << summary.generator_steps << " steps, last loss " << summary.generator_loss << " on "
        << examples.size() << " examples\n";
  }
  manifest.write();
  return summary;
}

// ---------------------------------------------------------------- inference

Pipeline::Pipeline(const RunConfig& cfg) : cfg_(cfg) {
  generator_ = GeneratorModel::from_checkpoint(load_ckpt(cfg.generator_ckpt_path(), "generator checkpoint"));
  if (!cfg.no_graph) {
    concept_ = ConceptModel::from_checkpoint(load_ckpt(cfg.concept_ckpt_path(), "concept checkpoint"));
    if (!cfg.no_seca) span_ = SpanModel::from_checkpoint(load_ckpt(cfg.span_ckpt_path(), "span checkpoint"));
  }
}

SpanSource Pipeline::source() const {
  SpanSource s;
  s.use_gold = cfg_.gold_spans;
  s.model = span_ ? &*span_ : nullptr;
  s.whole_utterance = cfg_.no_seca;
  return s;
}

const std::vector<std::string>& Pipeline::emotions() const {
  static const std::vector<std::string> none;
  return span_ ? span_->emotions() : none;
}

std::vector<std::string> Pipeline::concepts(const Dialogue& d, std::size_t n) const {
  if (!concept_ || n == 0) return {};
  const SpanSource src = source();
  ConceptExample ex;
  ex.id = d.id;
  for (std::size_t i = 0; i < n; ++i) {
    ex.context.push_back(concept_->vocab().encode(d.utterances[i].tokens));
    ex.concept_sets.push_back(d.utterances[i].tokens.empty()
                                  ? std::vector<std::size_t>{}
                                  : concept_set(concept_->graph(), src, d, i, cfg_.max_concepts));
  }
  return predict_concepts(*concept_, ex, cfg_.max_concepts);
}

GeneratorInput Pipeline::input(const Dialogue& d, std::size_t n, const std::vector<std::string>& concepts) const {
  std::vector<std::vector<std::string>> context;
  for (std::size_t i = 0; i < n; ++i) context.push_back(d.utterances[i].tokens);
  return build_input(vocab(), context, concepts, generator_->config().max_src_len);
}

GeneratedResponse Pipeline::respond(const Dialogue& d, std::size_t n) const {
  GeneratedResponse r;
  r.id = d.id + "#" + std::to_string(n);
  r.concepts = concepts(d, n);
  const Generation g =
      generator_->generate(input(d, n, r.concepts), cfg_.max_len, {.top_k = cfg_.top_k, .seed = cfg_.seed_value()});
  r.tokens = g.tokens;
  r.copied = g.copied;
  if (n < d.utterances.size()) r.reference = d.utterances[n].tokens;
  return r;
}

std::string response_record(const GeneratedResponse& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["concepts"] = r.concepts;
  j["response"] = join(r.tokens, " ");
  j["copied"] = r.copied;
  j["reference"] = join(r.reference, " ");
  return j.dump();
}

std::vector<GeneratedResponse> cmd_generate(const RunConfig& cfg, const std::string& input,
                                            const std::string& output, std::ostream& log) {
  cfg.validate();
  const auto dialogues = load_dialogues(input);
  const Pipeline pipe(cfg);
  std::vector<GeneratedResponse> out;
  std::string text;
  for (const auto& ex : make_exchanges(dialogues)) {
    out.push_back(pipe.respond(*ex.dialogue, ex.response_index));
    text += response_record(out.back()) + "\n";
  }
  const std::string path = output.empty() ? (fs::path(cfg.out_dir) / "responses.jsonl").string() : output;
  write_file(path, text);
  RunManifest m("generate", cfg);
  m.input(input);
  m.input(cfg.generator_ckpt_path());
  if (!cfg.no_graph) {
    m.input(cfg.concept_ckpt_path());
    if (!cfg.no_seca) m.input(cfg.span_ckpt_path());
  }
  m.output(path);
  m.write();
  log << "generated " << out.size() << " responses into " << path << "\n";
  return out;
}

// ---------------------------------------------------------------- eval

namespace {

std::vector<std::pair<std::string, Sentence>> read_records(const std::string& path) {
  require_file(path, "records file");
  const std::string text = read_file(path);
  std::vector<std::pair<std::string, Sentence>> out;
  std::istringstream in(text);
  std::size_t line_no = 0;
  bool corpus = false;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw Error(path + ":" + std::to_string(line_no) + ": not valid JSON");
    }
    if (j.contains("utterances")) {
      corpus = true;
      break;
    }
    if (!j.contains("id") || !j.contains("response")) {
      throw Error(path + ":" + std::to_string(line_no) + ": record needs \"id\" and \"response\"");
    }
    out.emplace_back(j.at("id").get<std::string>(), split_ws(j.at("response").get<std::string>()));
  }
  if (corpus) {
    out.clear();
    const auto dialogues = parse_corpus(text);
    for (const auto& ex : make_exchanges(dialogues)) {
      out.emplace_back(ex.dialogue->id + "#" + std::to_string(ex.response_index), ex.response().tokens);
    }
  }
  return out;
}

}  // namespace

AlignedPairs read_aligned(const std::string& hypotheses, const std::string& references) {
  const auto hyps = read_records(hypotheses);
  const auto refs = read_records(references);
  AlignedPairs out;
  const std::size_t n = std::min(hyps.size(), refs.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (hyps[i].first != refs[i].first) {
      throw Error("record " + std::to_string(i + 1) + ": hypothesis id '" + hyps[i].first +
                  "' does not match reference id '" + refs[i].first + "'");
    }
    out.ids.push_back(hyps[i].first);
    out.hypotheses.push_back(hyps[i].second);
    out.references.push_back(refs[i].second);
  }
  if (hyps.size() != refs.size()) {
    const bool more_refs = refs.size() > hyps.size();
    throw Error("record " + std::to_string(n + 1) + ": " + (more_refs ? "reference id '" : "hypothesis id '") +
                (more_refs ? refs[n].first : hyps[n].first) + "' has no " +
                (more_refs ? "hypothesis" : "reference"));
  }
  return out;
}

EvalReport cmd_eval(const RunConfig& cfg, const std::string& hypotheses, const std::string& references,
                    std::ostream& log) {
  const AlignedPairs pairs = read_aligned(hypotheses, references);
  const EvalReport report = evaluate(pairs.hypotheses, pairs.references);
  const std::string path = (fs::path(cfg.out_dir) / "eval.json").string();
  write_file(path, report.to_json().dump(2) + "\n");
  RunManifest m("eval", cfg);
  m.input(hypotheses);
  m.input(references);
  m.output(path);
  m.write();
  log << "report written to " << path << "\n";
  return report;
}

double teacher_forced_loss(const RunConfig& cfg) {
  const auto dialogues = load_dialogues(cfg.corpus);
  const Pipeline pipe(cfg);
  nn::NoGradGuard guard;
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& ex : make_exchanges(dialogues)) {
    const auto concepts = pipe.concepts(*ex.dialogue, ex.response_index);
    total += pipe.generator()
                 .loss(pipe.input(*ex.dialogue, ex.response_index, concepts), ex.response().tokens)
                 .item();
    ++n;
  }
  if (n == 0) throw Error("teacher-forced loss: corpus has no exchanges");
  return total / static_cast<double>(n);
}

std::vector<VariantResult> cmd_eval_variants(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  struct Variant {
    const char* name;
    bool RunConfig::*flag;
  };
  const Variant variants[] = {{"full", nullptr},
                              {"w/o copy", &RunConfig::no_copy},
                              {"w/o seca", &RunConfig::no_seca},
                              {"w/o graph", &RunConfig::no_graph}};
  const char* dirs[] = {"full", "no_copy", "no_seca", "no_graph"};
  std::vector<VariantResult> rows;
  for (std::size_t i = 0; i < 4; ++i) {
    RunConfig v = cfg;
    v.no_copy = v.no_seca = v.no_graph = false;
    // equal step budgets, otherwise the loss column compares training effort
    v.span_stop_exact = v.generator_stop_exact = false;
    v.concept_stop_below = -1.0;
    if (variants[i].flag) v.*(variants[i].flag) = true;
    v.out_dir = (fs::path(cfg.out_dir) / "variants" / dirs[i]).string();
    v.graph = v.span_ckpt = v.concept_ckpt = v.generator_ckpt = "";
    log << "== " << variants[i].name << "\n";
    fs::create_directories(v.out_dir);
    if (!v.no_graph) cmd_build_graph(v, log);
    cmd_train(v, Stage::kAll, log);
    const std::string responses = (fs::path(v.out_dir) / "responses.jsonl").string();
    cmd_generate(v, v.eval_corpus_path(), responses, log);
    const AlignedPairs pairs = read_aligned(responses, v.eval_corpus_path());
    rows.push_back({variants[i].name, evaluate(pairs.hypotheses, pairs.references), teacher_forced_loss(v)});
  }
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    auto row = r.report.to_json();
    row["variant"] = r.name;
    row["teacher_forced_loss"] = r.teacher_forced_loss;
    j.push_back(row);
  }
  const std::string json_path = (fs::path(cfg.out_dir) / "variants.json").string();
  const std::string table_path = (fs::path(cfg.out_dir) / "variants.txt").string();
  write_file(json_path, j.dump(2) + "\n");
  write_file(table_path, variants_table(rows));
  RunManifest m("eval-variants", cfg);
  m.input(cfg.corpus);
  if (cfg.eval_corpus_path() != cfg.corpus) m.input(cfg.eval_corpus_path());
  m.output(json_path);
  m.output(table_path);
  m.write();
  return rows;
}

std::string variants_table(const std::vector<VariantResult>& rows) {
  std::vector<std::pair<std::string, EvalReport>> base;
  for (const auto& r : rows) base.emplace_back(r.name, r.report);
  std::istringstream lines(report_table(base));
  std::string out;
  std::string line;
  std::getline(lines, line);
  out += line + "  TF-loss\n";
  for (const auto& r : rows) {
    std::getline(lines, line);
    char buf[32];
    std::snprintf(buf, sizeof buf, "  %7.4f\n", r.teacher_forced_loss);
    out += line + buf;
  }
  return out;
}

// ---------------------------------------------------------------- inspect / chat

std::string cmd_inspect(const std::string& graph_path, const std::string& label) {
  require_file(graph_path, "graph");
  const EctGraph g = load_graph_file(graph_path);
  const auto v = g.find(label);
  if (!v) throw GraphError("'" + label + "' is not a vertex of " + graph_path);
  std::vector<GraphEdge> edges(g.out_edges(*v).begin(), g.out_edges(*v).end());
  std::sort(edges.begin(), edges.end(), [&](const GraphEdge& a, const GraphEdge& b) {
    if (a.pmi != b.pmi) return a.pmi > b.pmi;
    return g.name(a.tail) < g.name(b.tail);
  });
  std::string out;
  char buf[64];
  for (const auto& e : edges) {
    std::snprintf(buf, sizeof buf, "\t%.6f\t%llu\n", e.pmi, static_cast<unsigned long long>(e.count));
    out += g.name(e.tail) + buf;
  }
  return out;
}

void cmd_chat(const RunConfig& cfg, std::istream& in, std::ostream& out) {
  cfg.validate();
  const Pipeline pipe(cfg);
  Dialogue d;
  d.id = "chat";
  d.emotion = cfg.emotion;
  if (d.emotion.empty()) d.emotion = pipe.emotions().empty() ? "neutral" : pipe.emotions().front();
  const auto& known = pipe.emotions();
  if (!known.empty() && std::find(known.begin(), known.end(), d.emotion) == known.end()) {
    throw ConfigError("unknown emotion '" + d.emotion + "' (known: " + join(known, ", ") + ")");
  }
  for (std::string line; std::getline(in, line);) {
    line = trim(line);
    if (line.empty()) continue;
    if (line == "/quit") break;
    if (line == "/reset") {
      d.utterances.clear();
      out << "context cleared (0 utterances)\n" << std::flush;
      continue;
    }
    Utterance u;
    u.speaker = Role::kSpeaker;
    u.text = line;
    u.tokens = tokenize(line);
    d.utterances.push_back(u);
    try {
      const GeneratedResponse r = pipe.respond(d, d.utterances.size());
      out << "concepts: " << join(r.concepts, ", ") << "\n";
      out << "response: " << join(r.tokens, " ") << "\n" << std::flush;
      Utterance reply;
      reply.speaker = Role::kListener;
      reply.text = join(r.tokens, " ");
      reply.tokens = r.tokens;
      d.utterances.push_back(reply);
    } catch (const Error& e) {
      d.utterances.pop_back();
      out << "error: " << e.what() << "\n" << std::flush;
    }
  }
}

}  // namespace ectg
