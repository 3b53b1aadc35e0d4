#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "ectg/corpus.hpp"

namespace ectg {

/// Token <-> id table. Ids 0..5 are reserved and fixed:
///   0 <pad>  1 <unk>  2 <bos>  3 <eos>  4 <cls>  5 <sep>
/// <eos> doubles as the "no insertion" marker of the insertion head.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kCls = 4;
  static constexpr int kSep = 5;
  static constexpr int kReserved = 6;

  Vocab();
  /// Rebuilds from an id-ordered token list (must start with the reserved symbols).
  explicit Vocab(std::vector<std::string> tokens);

  /// Returns the id of `token`, or kUnk.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Tokens with frequency >= min_freq, most frequent first, ties lexicographic.
Vocab build_vocab(const std::vector<Dialogue>& dialogues, std::size_t min_freq);

}  // namespace ectg
