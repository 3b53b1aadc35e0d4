#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ectg {

/// Identifier of the bundled English stopword list; bump when the list changes.
inline constexpr std::string_view kStopwordsVersion = "ectg-en-1";

bool is_stopword(std::string_view token);
const std::vector<std::string>& stopwords();

/// RAKE keyword extraction over a token span.
///
/// Candidate phrases are maximal runs of tokens containing no stopword and no
/// punctuation. Each word scores degree / frequency over the phrase
/// co-occurrence graph, each phrase the sum of its word scores. The words of
/// the `max_phrases` best phrases (ties keep original order) are returned
/// once each, in order of first appearance.
std::vector<std::string> extract_keywords(const std::vector<std::string>& tokens,
                                          std::size_t max_phrases = 3);

}  // namespace ectg
