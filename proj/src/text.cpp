#include "rageval/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <string>

namespace rageval::text {
namespace {

constexpr char32_t kReplacement = 0xFFFD;

bool is_space(char32_t cp) {
  switch (cp) {
    case ' ': case '\t': case '\n': case '\r': case '\v': case '\f':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_paragraph_separator(char32_t cp) { return cp == 0x2029; }

bool is_upper(char32_t cp) { return to_lower(cp) != cp; }

bool is_digit(char32_t cp) { return cp >= '0' && cp <= '9'; }

bool is_terminal(char32_t cp) { return cp == '.' || cp == '!' || cp == '?' || cp == 0x2026; }

bool is_closer(char32_t cp) {
  return cp == '"' || cp == '\'' || cp == ')' || cp == ']' || cp == 0x201D || cp == 0x2019 ||
         cp == 0xBB;
}

bool is_opener(char32_t cp) {
  return cp == '"' || cp == '\'' || cp == '(' || cp == '[' || cp == 0x201C || cp == 0x2018 ||
         cp == 0xAB;
}

constexpr std::array<std::string_view, 20> kAbbreviations = {
    "e.g.", "i.e.", "fig.", "figs.", "eq.",   "dr.",  "mr.", "mrs.", "ms.",  "prof.",
    "no.",  "vs.",  "cf.",  "al.",   "approx.", "ref.", "sec.", "vol.", "st.", "etc."};

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

// True when the '.' ending at `dot` belongs to an abbreviation or an initial.
bool is_abbreviation(std::string_view text, std::size_t dot, std::size_t floor) {
  std::size_t start = dot;
  while (start > floor && text[start - 1] != ' ') --start;
  const std::string_view word = text.substr(start, dot + 1 - start);
  const std::string_view stem = word.substr(0, word.size() - 1);
  if (stem.size() == 1 && std::isalpha(static_cast<unsigned char>(stem[0]))) return true;
  const auto lowered = ascii_lower(word);
  if (std::find(kAbbreviations.begin(), kAbbreviations.end(), lowered) != kAbbreviations.end()) {
    return true;
  }
  // Dotted acronyms such as "U.S." keep their internal dots.
  return stem.find('.') != std::string_view::npos &&
         std::all_of(stem.begin(), stem.end(), [](char c) {
           return c == '.' || std::isalpha(static_cast<unsigned char>(c));
         });
}

}  // namespace

char32_t decode_utf8(std::string_view s, std::size_t& pos) {
  const auto lead = static_cast<unsigned char>(s[pos]);
  if (lead < 0x80) {
    ++pos;
    return lead;
  }
  std::size_t length = 0;
  char32_t cp = 0;
  if ((lead & 0xE0) == 0xC0) {
    length = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    length = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    length = 4;
    cp = lead & 0x07;
  } else {
    ++pos;
    return kReplacement;
  }
  if (pos + length > s.size()) {
    ++pos;
    return kReplacement;
  }
  for (std::size_t i = 1; i < length; ++i) {
    const auto cont = static_cast<unsigned char>(s[pos + i]);
    if ((cont & 0xC0) != 0x80) {
      ++pos;
      return kReplacement;
    }
    cp = (cp << 6) | (cont & 0x3F);
  }
  static constexpr std::array<char32_t, 5> kMinimum = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMinimum[length] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    ++pos;
    return kReplacement;
  }
  pos += length;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

bool is_word_codepoint(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  }
  if (cp < 0xC0) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (is_space(cp)) return false;
  if (cp >= 0x2000 && cp <= 0x206F) return false;  // general punctuation
  if (cp >= 0x20A0 && cp <= 0x20CF) return false;  // currency
  if (cp >= 0x2190 && cp <= 0x23FF) return false;  // arrows, math, technical
  if (cp >= 0x2500 && cp <= 0x27BF) return false;  // box drawing, shapes, dingbats
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if ((cp >= 0xFF00 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) ||
      (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65)) {
    return false;
  }
  return cp != kReplacement;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp < 0xC0) return cp;
  if (cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  if (cp >= 0x100 && cp <= 0x137) return (cp % 2 == 0) ? cp + 1 : cp;
  if (cp >= 0x139 && cp <= 0x148) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp >= 0x14A && cp <= 0x177) return (cp % 2 == 0) ? cp + 1 : cp;
  if (cp >= 0x179 && cp <= 0x17E) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  return cp;
}

NormalizedText normalize(std::string_view raw) {
  NormalizedText result;
  bool pending_space = false;
  int newlines = 0;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    const char32_t cp = decode_utf8(raw, pos);
    if (is_space(cp)) {
      pending_space = true;
      if (cp == '\n') ++newlines;
      if (is_paragraph_separator(cp)) newlines += 2;
      continue;
    }
    if (result.text.empty()) {
      result.paragraph_starts.push_back(0);
    } else if (newlines >= 2) {
      result.text += ' ';
      result.paragraph_starts.push_back(result.text.size());
    } else if (pending_space) {
      result.text += ' ';
    }
    pending_space = false;
    newlines = 0;
    append_utf8(result.text, cp);
  }
  return result;
}

std::vector<Span> split_sentences(const NormalizedText& normalized) {
  const std::string_view text = normalized.text;
  if (text.empty()) return {};

  std::vector<std::size_t> cuts(normalized.paragraph_starts.begin(),
                                normalized.paragraph_starts.end());
  for (std::size_t p = 0; p < normalized.paragraph_starts.size(); ++p) {
    const std::size_t floor = normalized.paragraph_starts[p];
    const std::size_t ceiling = p + 1 < normalized.paragraph_starts.size()
                                    ? normalized.paragraph_starts[p + 1]
                                    : text.size();
    std::size_t pos = floor;
    while (pos < ceiling) {
      const std::size_t at = pos;
      const char32_t cp = decode_utf8(text, pos);
      if (!is_terminal(cp)) continue;
      std::size_t after = pos;
      while (after < ceiling) {
        std::size_t probe = after;
        if (!is_closer(decode_utf8(text, probe))) break;
        after = probe;
      }
      if (after >= ceiling || text[after] != ' ') continue;
      std::size_t next = after + 1;
      if (next >= ceiling) continue;
      char32_t head = 0;
      while (next < ceiling) {
        std::size_t probe = next;
        head = decode_utf8(text, probe);
        if (!is_opener(head)) break;
        next = probe;
      }
      if (!(is_upper(head) || is_digit(head))) continue;
      if (cp == '.' && is_abbreviation(text, at, floor)) continue;
      cuts.push_back(after + 1);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<Span> spans;
  spans.reserve(cuts.size());
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    const std::size_t end = i + 1 < cuts.size() ? cuts[i + 1] : text.size();
    spans.push_back({cuts[i], end});
  }
  return spans;
}

std::vector<Span> tokenize(std::string_view text) {
  std::vector<Span> tokens;
  std::size_t begin = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t probe = pos;
    const char32_t cp = decode_utf8(text, probe);
    if (is_space(cp)) {
      pos = probe;
      continue;
    }
    pos = probe;
    if (is_word_codepoint(cp)) {
      std::size_t taken = 1;
      while (pos < text.size() && taken < kMaxPieceCodepoints) {
        probe = pos;
        if (!is_word_codepoint(decode_utf8(text, probe))) break;
        pos = probe;
        ++taken;
      }
    }
    while (pos < text.size()) {
      probe = pos;
      if (!is_space(decode_utf8(text, probe))) break;
      pos = probe;
    }
    tokens.push_back({begin, pos});
    begin = pos;
  }
  return tokens;
}

std::size_t count_tokens(std::string_view text) { return tokenize(text).size(); }

std::vector<std::string> analyze(std::string_view text) {
  std::vector<std::string> terms;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const char32_t cp = decode_utf8(text, pos);
    if (is_word_codepoint(cp)) {
      append_utf8(current, to_lower(cp));
    } else if (!current.empty()) {
      terms.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) terms.push_back(std::move(current));
  return terms;
}

}  // namespace rageval::text
