#include "ectg/corpus.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ectg {
namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }
bool is_word(unsigned char c) { return !is_space(c) && !is_punct(c); }

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

Utterance parse_utterance(const nlohmann::json& j, const std::string& id, std::size_t index) {
  Utterance u;
  const std::string who = j.at("speaker").get<std::string>();
  if (who == "speaker") {
    u.speaker = Role::kSpeaker;
  } else if (who == "listener") {
    u.speaker = Role::kListener;
  } else {
    throw CorpusError("dialogue " + id + ": unknown speaker role '" + who + "'");
  }
  u.text = j.at("text").get<std::string>();
  u.tokens = tokenize(u.text);
  if (j.contains("cause_spans")) {
    for (const auto& s : j.at("cause_spans")) {
      if (!s.is_array() || s.size() != 2) {
        throw CorpusError("dialogue " + id + ": cause span must be [start, end]");
      }
      const auto start = s.at(0).get<long long>();
      const auto end = s.at(1).get<long long>();
      if (start < 0 || end < start || static_cast<std::size_t>(end) >= u.tokens.size()) {
        throw CorpusError("dialogue " + id + ": span out of range [" + std::to_string(start) +
                          "," + std::to_string(end) + "] in utterance " + std::to_string(index) +
                          " with " + std::to_string(u.tokens.size()) + " tokens");
      }
      const TokenSpan span{static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
      if (!u.cause_spans.empty() && span.start <= u.cause_spans.back().end) {
        throw CorpusError("dialogue " + id + ": cause spans overlap or are unsorted in utterance " +
                          std::to_string(index));
      }
      u.cause_spans.push_back(span);
    }
  }
  return u;
}

Dialogue parse_dialogue(const nlohmann::json& j) {
  Dialogue d;
  d.id = j.at("id").get<std::string>();
  d.emotion = j.at("emotion").get<std::string>();
  if (d.emotion.empty()) throw CorpusError("dialogue " + d.id + ": empty emotion label");
  const auto& utts = j.at("utterances");
  if (!utts.is_array() || utts.empty()) throw CorpusError("dialogue " + d.id + ": no utterances");
  for (std::size_t i = 0; i < utts.size(); ++i) {
    Utterance u = parse_utterance(utts[i], d.id, i);
    if (u.tokens.empty()) throw CorpusError("dialogue " + d.id + ": empty utterance " + std::to_string(i));
    if (!d.utterances.empty() && d.utterances.back().speaker == u.speaker) {
      throw CorpusError("dialogue " + d.id + ": speakers do not alternate at utterance " +
                        std::to_string(i));
    }
    d.utterances.push_back(std::move(u));
  }
  return d;
}

}  // namespace

std::string_view role_name(Role r) { return r == Role::kSpeaker ? "speaker" : "listener"; }

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      const bool inner_hyphen = c == '-' && !cur.empty() && i + 1 < text.size() &&
                                is_word(static_cast<unsigned char>(text[i + 1]));
      if (inner_hyphen) {
        cur.push_back('-');
      } else {
        flush();
        out.emplace_back(1, static_cast<char>(c));
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::vector<Dialogue> parse_corpus(std::istream& in) {
  std::vector<Dialogue> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError(at_line(lineno) + "malformed JSON: " + e.what());
    }
    try {
      out.push_back(parse_dialogue(j));
    } catch (const CorpusError& e) {
      throw CorpusError(at_line(lineno) + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(at_line(lineno) + "schema violation: " + e.what());
    }
  }
  return out;
}

std::vector<Dialogue> parse_corpus(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_corpus(in);
}

std::vector<Dialogue> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus " + path.string());
  return parse_corpus(in);
}

std::string serialize_dialogue(const Dialogue& d) {
  nlohmann::json j;
  j["id"] = d.id;
  j["emotion"] = d.emotion;
  j["utterances"] = nlohmann::json::array();
  for (const auto& u : d.utterances) {
    nlohmann::json spans = nlohmann::json::array();
    for (const auto& s : u.cause_spans) spans.push_back({s.start, s.end});
    j["utterances"].push_back(
        {{"speaker", std::string(role_name(u.speaker))}, {"text", u.text}, {"cause_spans", spans}});
  }
  return j.dump();
}

std::string serialize_corpus(const std::vector<Dialogue>& dialogues) {
  std::string out;
  for (const auto& d : dialogues) {
    out += serialize_dialogue(d);
    out += '\n';
  }
  return out;
}

std::vector<Exchange> make_exchanges(const std::vector<Dialogue>& dialogues) {
  std::vector<Exchange> out;
  for (const auto& d : dialogues) {
    for (std::size_t i = 1; i < d.utterances.size(); ++i) {
      if (d.utterances[i].speaker == Role::kListener) out.push_back({&d, i});
    }
  }
  return out;
}

}  // namespace ectg
