#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "ectg/nn/tensor.hpp"

namespace ectg {

class CorpusError : public Error {
 public:
  using Error::Error;
};

enum class Role { kSpeaker, kListener };

std::string_view role_name(Role r);

/// Inclusive token range [start, end].
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct Utterance {
  Role speaker = Role::kSpeaker;
  std::string text;
  std::vector<std::string> tokens;
  std::vector<TokenSpan> cause_spans;  // sorted, non-overlapping
  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Dialogue {
  std::string id;
  std::string emotion;
  std::vector<Utterance> utterances;
  friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

/// Lowercases ASCII, isolates each ASCII punctuation character as its own
/// token and splits on whitespace. A hyphen with a word character on both
/// sides stays inside the word ("ex-girlfriend"). Bytes >= 0x80 are word
/// characters, so UTF-8 passes through untouched.
std::vector<std::string> tokenize(std::string_view text);

/// Parses JSON Lines, one dialogue per line (blank lines skipped).
/// Throws CorpusError carrying the 1-based line number or dialogue id.
std::vector<Dialogue> parse_corpus(std::istream& in);
std::vector<Dialogue> parse_corpus(std::string_view text);
std::vector<Dialogue> load_corpus(const std::filesystem::path& path);

/// Canonical JSONL: compact objects, keys sorted, cause_spans always present.
std::string serialize_dialogue(const Dialogue& d);
std::string serialize_corpus(const std::vector<Dialogue>& dialogues);

/// One training instance: a listener turn and everything before it.
struct Exchange {
  const Dialogue* dialogue = nullptr;
  std::size_t response_index = 0;  // context is utterances [0, response_index)

  std::size_t context_size() const { return response_index; }
  const Utterance& response() const { return dialogue->utterances[response_index]; }
};

/// Every listener turn with at least one preceding utterance, in corpus order.
std::vector<Exchange> make_exchanges(const std::vector<Dialogue>& dialogues);

}  // namespace ectg
