#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rageval/util.hpp"

namespace rageval::corpus {

struct Document {
  std::string doc_id;
  std::string title;
  std::string text;
  std::string source_uri;
};

struct Passage {
  std::string passage_id;
  std::string doc_id;
  std::size_t seq = 0;
  std::string text;
  std::size_t token_count = 0;
  std::size_t chunk_budget = 0;

  bool operator==(const Passage&) const = default;
};

struct CorpusManifest {
  std::string corpus_id;
  std::size_t chunk_budget = 0;
  std::string tokenizer_id;
  std::size_t passage_count = 0;
  std::size_t doc_count = 0;
  std::string checksum;
  std::string segmentation = "greedy-sentence";
};

struct RejectedDocument {
  std::string doc_id;
  std::string reason;
};

struct IngestResult {
  CorpusManifest manifest;
  std::vector<RejectedDocument> rejected;
};

inline constexpr std::size_t kMinChunkBudget = 16;

/// Read-only passage lookup by passage_id, keeping (doc_id, seq) order.
class PassageTable {
 public:
  PassageTable() = default;
  explicit PassageTable(std::vector<Passage> passages);

  const Passage& at(std::string_view passage_id) const;
  const Passage* find(std::string_view passage_id) const;
  const std::vector<Passage>& all() const { return passages_; }
  std::size_t size() const { return passages_.size(); }

 private:
  std::vector<Passage> passages_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

/// Splits one document into passages. Sentences are packed greedily until the
/// next one would overflow the budget; a sentence longer than the budget is
/// cut into token windows first. The result is empty when the document has no
/// text after normalization.
std::vector<Passage> chunk_document(const Document& document, std::size_t chunk_budget);

std::string make_passage_id(std::string_view doc_id, std::size_t seq);

/// Chunks every document and persists the passage store under
/// store_root/corpus_id. Documents that normalize to empty text are rejected
/// individually; duplicate doc_ids fail the whole ingest.
IngestResult ingest(std::span<const Document> documents, std::string_view corpus_id,
                    std::size_t chunk_budget, std::string_view tokenizer_id,
                    const std::filesystem::path& store_root);

/// Passages in (doc_id, seq) order after verifying the manifest checksum.
std::vector<Passage> load_passages(const std::filesystem::path& store_root,
                                   std::string_view corpus_id);
CorpusManifest load_manifest(const std::filesystem::path& store_root, std::string_view corpus_id);

std::filesystem::path corpus_dir(const std::filesystem::path& store_root, std::string_view corpus_id);

/// Reads a directory of plain-text files (stem = doc_id) or a JSON Lines file
/// of Document objects.
std::vector<Document> read_documents(const std::filesystem::path& source);

Json to_json(const Passage& passage);
Passage passage_from_json(const Json& record);
Json to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(const Json& record);

}  // namespace rageval::corpus
