#include "ectg/keywords.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <unordered_set>

namespace ectg {
namespace {

// NLTK's English list plus a handful of conversational fillers.
const std::vector<std::string> kStopwords = {
    "a",          "about",    "above",    "after",      "again",     "against",  "ain",
    "all",        "also",     "am",       "an",         "and",       "any",      "are",
    "aren",       "as",       "at",       "be",         "because",   "been",     "before",
    "being",      "below",    "between",  "both",       "but",       "by",       "can",
    "could",      "couldn",   "d",        "did",        "didn",      "do",       "does",
    "doesn",      "doing",    "don",      "down",       "during",    "each",     "few",
    "for",        "from",     "further",  "had",        "hadn",      "has",      "hasn",
    "have",       "haven",    "having",   "he",         "her",       "here",     "hers",
    "herself",    "him",      "himself",  "his",        "how",       "i",        "if",
    "in",         "into",     "is",       "isn",        "it",        "its",      "itself",
    "just",       "ll",       "m",        "ma",         "me",        "mightn",   "more",
    "most",       "much",     "mustn",    "my",         "myself",    "needn",    "no",
    "nor",        "not",      "now",      "o",          "of",        "off",      "oh",
    "on",         "once",     "only",     "or",         "other",     "our",      "ours",
    "ourselves",  "out",      "over",     "own",        "re",        "really",   "s",
    "same",       "shan",     "she",      "should",     "shouldn",   "so",       "some",
    "such",       "t",        "than",     "that",       "the",       "their",    "theirs",
    "them",       "themselves", "then",   "there",      "these",     "they",     "this",
    "those",      "through",  "to",       "too",        "under",     "until",    "up",
    "ve",         "very",     "was",      "wasn",       "we",        "were",     "weren",
    "what",       "when",     "where",    "which",      "while",     "who",      "whom",
    "why",        "will",     "with",     "won",        "would",     "wouldn",   "wow",
    "y",          "yeah",     "you",      "your",       "yours",     "yourself", "yourselves",
};

bool is_delimiter(const std::string& token) {
  if (token.size() != 1) return false;
  const auto c = static_cast<unsigned char>(token[0]);
  return c < 0x80 && std::ispunct(c) != 0;
}

}  // namespace

bool is_stopword(std::string_view token) {
  static const std::unordered_set<std::string_view> set(kStopwords.begin(), kStopwords.end());
  return set.count(token) != 0;
}

const std::vector<std::string>& stopwords() { return kStopwords; }

std::vector<std::string> extract_keywords(const std::vector<std::string>& tokens,
                                          std::size_t max_phrases) {
  std::vector<std::vector<std::string>> phrases;
  std::vector<std::string> current;
  for (const auto& t : tokens) {
    if (is_stopword(t) || is_delimiter(t)) {
      if (!current.empty()) phrases.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(t);
    }
  }
  if (!current.empty()) phrases.push_back(std::move(current));
  if (phrases.empty()) return {};

  std::map<std::string, double> freq;
  std::map<std::string, double> degree;
  for (const auto& p : phrases) {
    for (const auto& w : p) {
      freq[w] += 1.0;
      degree[w] += static_cast<double>(p.size());
    }
  }
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    double s = 0.0;
    for (const auto& w : phrases[i]) s += degree[w] / freq[w];
    scored.emplace_back(s, i);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<bool> chosen(phrases.size(), false);
  for (std::size_t k = 0; k < std::min(max_phrases, scored.size()); ++k) {
    chosen[scored[k].second] = true;
  }

  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (!chosen[i]) continue;
    for (const auto& w : phrases[i]) {
      if (seen.insert(w).second) out.push_back(w);
    }
  }
  return out;
}

}  // namespace ectg
