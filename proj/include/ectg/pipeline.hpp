#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ectg/cause_analysis.hpp"
#include "ectg/concept_predictor.hpp"
#include "ectg/eval_metrics.hpp"
#include "ectg/response_generator.hpp"

namespace ectg {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  // paths; empty ones resolve inside out_dir
  std::string corpus;
  std::string eval_corpus;  // defaults to corpus
  std::string out_dir = "run";
  std::string graph;
  std::string span_ckpt;
  std::string concept_ckpt;
  std::string generator_ckpt;

  // model shape
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t ff_mult = 4;
  std::size_t layers = 2;          // span encoder, utterance encoder, both decoders, generator encoder
  std::size_t context_layers = 1;
  std::size_t d_gru = 768;
  std::size_t max_concepts = 5;
  double dropout = 0.0;

  // graph
  double pmi_threshold = 0.0;
  std::uint64_t min_count = 2;
  std::size_t min_freq = 1;

  // training
  double lr = 1e-3;
  double r = 1.0;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t span_steps = 2000;
  std::size_t concept_steps = 3000;
  std::size_t generator_steps = 1000;
  std::size_t checkpoint_every = 0;  // 0 = initial and final only
  bool span_stop_exact = false;
  double concept_stop_below = -1.0;  // negative = never
  bool generator_stop_exact = false;
  std::optional<std::uint64_t> seed;

  // decoding
  std::size_t max_len = 32;
  std::size_t max_src_len = 256;
  std::size_t top_k = 0;
  bool gold_spans = false;  // use annotated spans at inference when present
  std::string emotion;      // chat: emotion label handed to the span model

  // ablations
  bool no_copy = false;
  bool no_seca = false;
  bool no_graph = false;

  /// Sets one field from text; throws ConfigError on an unknown key or bad value.
  void set(const std::string& key, const std::string& value);
  /// Every field as key -> value text, in key order.
  std::map<std::string, std::string> values() const;
  /// Throws ConfigError unless the seed is set and sizes and rates are positive.
  void validate() const;

  std::string graph_path() const;
  std::string span_ckpt_path() const;
  std::string concept_ckpt_path() const;
  std::string generator_ckpt_path() const;
  std::string eval_corpus_path() const { return eval_corpus.empty() ? corpus : eval_corpus; }
  std::uint64_t seed_value() const;
};

/// `key = value` lines; '#' starts a comment.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

/// SHA-1 of "blob <size>\0" + bytes, hex.
std::string git_blob_sha1(std::string_view bytes);

/// Records config, inputs and outputs of one command as out_dir/manifest-<command>.json.
class RunManifest {
 public:
  RunManifest(std::string command, const RunConfig& cfg);
  void input(const std::string& path);
  void output(const std::string& path);
  std::string write() const;  // returns the manifest path
  nlohmann::ordered_json to_json() const;

 private:
  std::string command_;
  RunConfig cfg_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

// Commands. Messages go to `log`; every file they write is listed in the manifest.
struct GraphSummary {
  std::size_t vertices = 0;
  std::size_t edges = 0;
  std::string text;  // counts and PMI histogram
};
GraphSummary cmd_build_graph(const RunConfig& cfg, std::ostream& log);

enum class Stage { kSpans, kConcepts, kGenerator, kAll };
Stage parse_stage(const std::string& s);

struct TrainSummary {
  std::size_t span_steps = 0;
  double span_exact = 0.0;
  std::size_t concept_steps = 0;
  double concept_l_c = 0.0;
  std::size_t generator_steps = 0;
  double generator_loss = 0.0;
};
TrainSummary cmd_train(const RunConfig& cfg, Stage stage, std::ostream& log);

struct GeneratedResponse {
  std::string id;
  std::vector<std::string> concepts;
  std::vector<std::string> tokens;
  std::vector<bool> copied;
  std::vector<std::string> reference;
};

/// Loaded models for inference; the span and concept models are absent when
/// an ablation makes them unnecessary.
class Pipeline {
 public:
  explicit Pipeline(const RunConfig& cfg);

  const Vocab& vocab() const { return generator_->vocab(); }
  /// Predicted concepts for the reply to utterances [0, n) of `d`.
  std::vector<std::string> concepts(const Dialogue& d, std::size_t n) const;
  GeneratorInput input(const Dialogue& d, std::size_t n, const std::vector<std::string>& concepts) const;
  GeneratedResponse respond(const Dialogue& d, std::size_t n) const;
  const GeneratorModel& generator() const { return *generator_; }
  const std::vector<std::string>& emotions() const;

 private:
  SpanSource source() const;

  RunConfig cfg_;
  std::optional<SpanModel> span_;
  std::optional<ConceptModel> concept_;
  std::optional<GeneratorModel> generator_;
};

std::vector<GeneratedResponse> cmd_generate(const RunConfig& cfg, const std::string& input,
                                            const std::string& output, std::ostream& log);
std::string response_record(const GeneratedResponse& r);

/// Aligned (hypothesis, reference) token lists read from two JSONL files.
struct AlignedPairs {
  std::vector<std::string> ids;
  std::vector<Sentence> hypotheses;
  std::vector<Sentence> references;
};
/// Hypotheses: {"id", "response"} records. References: the same, or a corpus
/// file whose listener turns become "<dialogue id>#<turn>" records.
AlignedPairs read_aligned(const std::string& hypotheses, const std::string& references);
EvalReport cmd_eval(const RunConfig& cfg, const std::string& hypotheses, const std::string& references,
                    std::ostream& log);

struct VariantResult {
  std::string name;
  EvalReport report;
  double teacher_forced_loss = 0.0;
};
/// Trains and evaluates full, w/o copy, w/o seca and w/o graph under out_dir/variants.
/// Early-stopping switches are ignored so every variant gets the same step budget.
std::vector<VariantResult> cmd_eval_variants(const RunConfig& cfg, std::ostream& log);
std::string variants_table(const std::vector<VariantResult>& rows);

/// Mean generator loss over the training exchanges with the variant's own predicted concepts.
double teacher_forced_loss(const RunConfig& cfg);

/// Out-neighbours, highest PMI first; ties by name.
std::string cmd_inspect(const std::string& graph_path, const std::string& label);

/// Line-oriented chat until "/quit" or end of input.
void cmd_chat(const RunConfig& cfg, std::istream& in, std::ostream& out);

}  // namespace ectg
