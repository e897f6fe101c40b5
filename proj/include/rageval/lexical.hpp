#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rageval/corpus.hpp"
#include "rageval/ranking.hpp"

namespace rageval::lexical {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct Posting {
  std::uint32_t passage = 0;  // index into Bm25Index::passage_ids
  std::uint32_t term_frequency = 0;

  bool operator==(const Posting&) const = default;
};

/// Inverted index over analyzer terms. Passages are addressed by their index
/// in `passage_ids`, which is sorted ascending.
struct Bm25Index {
  std::string corpus_id;
  Bm25Params params;
  std::vector<std::string> passage_ids;
  std::vector<std::uint32_t> doc_lengths;  // analyzer terms per passage
  double avg_doc_length = 0.0;
  std::map<std::string, std::vector<Posting>> postings;

  std::size_t passage_count() const { return passage_ids.size(); }
  std::size_t document_frequency(const std::string& term) const;
};

struct LexicalResult {
  std::vector<ScoredHit> hits;
  /// Set when the query analyzes to zero terms.
  bool empty_query = false;
};

Bm25Index build_index(std::span<const corpus::Passage> passages, std::string_view corpus_id,
                      Bm25Params params = {});

/// Okapi BM25 with IDF(t) = ln(1 + (N - df + 0.5) / (df + 0.5)) over the
/// distinct query terms. Passages matching no query term are not returned.
LexicalResult bm25_search(const Bm25Index& index, std::string_view query, std::size_t k);

double idf(std::size_t passage_count, std::size_t document_frequency);

std::string serialize(const Bm25Index& index);
Bm25Index deserialize(std::string_view bytes);

std::filesystem::path index_path(const std::filesystem::path& store_root, std::string_view corpus_id);

/// Loads the corpus, builds the index and writes it beside the passage store.
Bm25Index build_and_persist(const std::filesystem::path& store_root, std::string_view corpus_id,
                            Bm25Params params = {});
Bm25Index load_index(const std::filesystem::path& store_root, std::string_view corpus_id);

}  // namespace rageval::lexical
