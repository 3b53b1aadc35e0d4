// Command-line front end; all work happens in the library pipeline.
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "ectg/fileio.hpp"
#include "ectg/pipeline.hpp"

namespace {

std::string flag_name(std::string key) {
  for (auto& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion-cause transition graph dialogue pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "key = value configuration file");

  // one override per configuration key
  const ectg::RunConfig defaults;
  std::map<std::string, std::string> overrides;
  std::map<std::string, std::string> switches;
  std::vector<std::pair<std::string, CLI::Option*>> switch_opts;
  for (const auto& [key, value] : defaults.values()) {
    if (value == "true" || value == "false") {
      // bare flag means true; an explicit value is also accepted
      switch_opts.emplace_back(key, app.add_option(flag_name(key), switches[key], "switch " + key + " (default " +
                                                                                    value + ")")
                                        ->expected(0, 1)
                                        ->default_str("true"));
    } else {
      app.add_option_function<std::string>(
          flag_name(key), [&overrides, key](const std::string& v) { overrides[key] = v; },
          "override " + key + (value.empty() ? "" : " (default " + value + ")"));
    }
  }

  auto* build = app.add_subcommand("build-graph", "build the transition graph from the corpus");
  auto* train = app.add_subcommand("train", "train the span, concept and generator models");
  std::string stage = "all";
  train->add_option("--stage", stage, "spans, concepts, generator or all")->capture_default_str();
  auto* gen = app.add_subcommand("generate", "generate a response for every listener turn");
  std::string gen_input, gen_output;
  gen->add_option("--input", gen_input, "corpus to respond to (default eval_corpus, then corpus)");
  gen->add_option("--output", gen_output, "responses file (default <out_dir>/responses.jsonl)");
  auto* eval = app.add_subcommand("eval", "score responses against references");
  std::string hyp_path, ref_path;
  bool variants = false;
  eval->add_option("hypotheses", hyp_path, "responses JSONL");
  eval->add_option("references", ref_path, "references JSONL or corpus");
  eval->add_flag("--variants", variants, "train and compare full, w/o copy, w/o seca and w/o graph");
  auto* inspect = app.add_subcommand("inspect", "list the out-neighbours of a concept");
  std::string label;
  inspect->add_option("concept", label, "graph vertex")->required();
  auto* chat = app.add_subcommand("chat", "interactive loop on standard input (/reset, /quit)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    ectg::RunConfig cfg = config_path.empty() ? ectg::RunConfig{} : ectg::load_config(config_path);
    for (const auto& [key, value] : overrides) cfg.set(key, value);
    for (const auto& [key, opt] : switch_opts) {
      if (opt->count() > 0) cfg.set(key, switches[key]);
    }

    if (build->parsed()) {
      std::cout << ectg::cmd_build_graph(cfg, std::cerr).text;
    } else if (train->parsed()) {
      ectg::cmd_train(cfg, ectg::parse_stage(stage), std::cerr);
    } else if (gen->parsed()) {
      ectg::cmd_generate(cfg, gen_input.empty() ? cfg.eval_corpus_path() : gen_input, gen_output, std::cerr);
    } else if (eval->parsed()) {
      if (variants) {
        std::cout << ectg::variants_table(ectg::cmd_eval_variants(cfg, std::cerr));
      } else {
        if (hyp_path.empty() || ref_path.empty()) {
          throw ectg::ConfigError("eval needs a hypotheses file and a references file (or --variants)");
        }
        std::cout << ectg::cmd_eval(cfg, hyp_path, ref_path, std::cerr).table();
      }
    } else if (inspect->parsed()) {
      std::cout << ectg::cmd_inspect(cfg.graph_path(), label);
    } else if (chat->parsed()) {
      ectg::cmd_chat(cfg, std::cin, std::cout);
    }
  } catch (const ectg::MissingInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
