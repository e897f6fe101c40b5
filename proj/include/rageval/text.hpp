#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace rageval::text {

/// Identifier recorded in corpus manifests for the chunking tokenizer below.
inline constexpr std::string_view kTokenizerId = "rageval-subword-v1";

/// Longest run of word codepoints kept as a single token; longer words are
/// split into pieces of this size.
inline constexpr std::size_t kMaxPieceCodepoints = 5;

struct Span {
  std::size_t begin = 0;  // byte offsets into the owning string
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

/// Whitespace-normalized text: runs of whitespace collapse to one ASCII space,
/// blank lines delimit paragraphs, paragraphs are joined by a single space.
/// Invalid UTF-8 is replaced by U+FFFD so the result always serializes.
struct NormalizedText {
  std::string text;
  std::vector<std::size_t> paragraph_starts;  // byte offsets, first is 0
};

NormalizedText normalize(std::string_view raw);

/// Sentence spans tiling the normalized text; each span carries its trailing
/// separator space. Boundaries come from paragraph starts and terminal
/// punctuation followed by a capitalized (or numeric) word.
std::vector<Span> split_sentences(const NormalizedText& normalized);

/// Reference subword tokenizer: a token is either a piece of at most
/// kMaxPieceCodepoints word codepoints or a single non-word codepoint, plus any
/// whitespace that follows it. Token spans tile the input exactly.
std::vector<Span> tokenize(std::string_view text);
std::size_t count_tokens(std::string_view text);

/// Lexical analyzer: maximal runs of word codepoints, lowercased. No stemming
/// and no stopword removal.
std::vector<std::string> analyze(std::string_view text);

bool is_word_codepoint(char32_t cp);
char32_t to_lower(char32_t cp);

/// Decodes one codepoint at `pos` and advances it; malformed input yields
/// U+FFFD and consumes a single byte.
char32_t decode_utf8(std::string_view s, std::size_t& pos);
void append_utf8(std::string& out, char32_t cp);

}  // namespace rageval::text
