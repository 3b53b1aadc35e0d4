#include "ectg/vocab.hpp"

#include <algorithm>
#include <array>
#include <map>

namespace ectg {
namespace {

const std::array<std::string, Vocab::kReserved> kReservedTokens = {"<pad>", "<unk>", "<bos>",
                                                                   "<eos>", "<cls>", "<sep>"};

}  // namespace

Vocab::Vocab() {
  for (const auto& t : kReservedTokens) add(t);
}

Vocab::Vocab(std::vector<std::string> tokens) {
  if (tokens.size() < kReserved ||
      !std::equal(kReservedTokens.begin(), kReservedTokens.end(), tokens.begin())) {
    throw Error("vocab: token list does not start with the reserved symbols");
  }
  for (const auto& t : tokens) {
    if (contains(t)) throw Error("vocab: duplicate token '" + t + "'");
    add(t);
  }
}

void Vocab::add(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

int Vocab::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error("vocab: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Vocab build_vocab(const std::vector<Dialogue>& dialogues, std::size_t min_freq) {
  if (min_freq < 1) throw Error("build_vocab: min_freq must be >= 1");
  std::map<std::string, std::size_t> freq;
  for (const auto& d : dialogues) {
    for (const auto& u : d.utterances) {
      for (const auto& t : u.tokens) ++freq[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : freq) {
    const bool reserved =
        std::find(kReservedTokens.begin(), kReservedTokens.end(), tok) != kReservedTokens.end();
    if (n >= min_freq && !reserved) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens(kReservedTokens.begin(), kReservedTokens.end());
  for (const auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocab(std::move(tokens));
}

}  // namespace ectg
