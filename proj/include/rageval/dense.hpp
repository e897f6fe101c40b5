#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rageval/backend.hpp"
#include "rageval/corpus.hpp"
#include "rageval/ranking.hpp"

namespace rageval::dense {

/// Cosine similarity q.p / (|q| |p|) accumulated in double precision.
/// Throws kPrecondition on a dimension mismatch and kDomain when either
/// vector is all zeros.
double cosine_similarity(std::span<const float> q, std::span<const float> p);

double euclidean_norm(std::span<const float> v);

/// Exact-scan vector store. Vectors are kept as 32-bit floats in one
/// row-major buffer; norms are cached in double precision.
class VectorStore {
 public:
  VectorStore() = default;
  VectorStore(std::string corpus_id, std::string backend_id, std::size_t dim);

  /// Appends one entry. Rejects dimension mismatches, non-finite values and
  /// zero vectors.
  void add(std::string passage_id, std::span<const float> values);

  const std::string& corpus_id() const { return corpus_id_; }
  const std::string& backend_id() const { return backend_id_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  const std::string& passage_id(std::size_t i) const { return ids_[i]; }
  std::span<const float> vector(std::size_t i) const;
  double norm(std::size_t i) const { return norms_[i]; }

  /// Top-k entries by cosine similarity to `query` over the full store.
  std::vector<ScoredHit> search(std::span<const float> query, std::size_t k) const;

  /// Multiplies every stored vector by `factor` (> 0) and refreshes norms.
  void scale(float factor);

  std::string serialize() const;
  static VectorStore deserialize(std::string_view bytes);

  /// JSON Lines view: one {passage_id, norm, vector} object per entry.
  std::vector<Json> dump() const;

 private:
  std::string corpus_id_;
  std::string backend_id_;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::vector<double> norms_;
};

/// Embeds every passage (with the backend's passage prefix) in batches of
/// batch_size, dispatched up to the backend's in-flight limit. A dimension
/// change between batches aborts with kDimensionDrift.
VectorStore embed_corpus(std::span<const corpus::Passage> passages, std::string_view corpus_id,
                         backend::BackendClient& client, std::size_t batch_size);

/// Embeds the query (with the backend's query prefix) and scans the store.
/// The store must have been built by the same backend.
std::vector<ScoredHit> dense_search(const VectorStore& store, std::string_view query_text,
                                    backend::BackendClient& client, std::size_t k);

std::filesystem::path store_path(const std::filesystem::path& store_root, std::string_view corpus_id,
                                 std::string_view backend_id);
void write_store(const std::filesystem::path& path, const VectorStore& store);
VectorStore load_store(const std::filesystem::path& path);

}  // namespace rageval::dense
