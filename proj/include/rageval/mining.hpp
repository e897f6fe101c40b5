#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rageval/backend.hpp"
#include "rageval/corpus.hpp"
#include "rageval/query.hpp"
#include "rageval/util.hpp"

namespace rageval::mining {

enum class Strategy { kPositive, kRandomNegative, kInDocumentNegative };

std::string_view to_string(Strategy strategy);
Strategy strategy_from_string(std::string_view name);

struct DatasetItem {
  std::string query_id;
  std::string query_text;
  std::string passage_id;
  std::string passage_text;
  bool label = false;
  Strategy strategy = Strategy::kPositive;

  bool operator==(const DatasetItem&) const = default;
};

struct MiningSettings {
  std::size_t random_negatives = 1;
  std::size_t indoc_negatives = 1;
  std::size_t pool_size = 256;
  std::uint64_t seed = 0;
};

struct ContextRelevanceDataset {
  std::vector<DatasetItem> items;  // grouped by query_id ascending, positive first
  MiningSettings settings;
  std::vector<std::string> short_queries;  // fewer in-document negatives than configured
  std::vector<std::string> warnings;

  std::size_t negatives_per_query() const { return settings.random_negatives + settings.indoc_negatives; }
};

/// Negatives chosen for one query plus anything worth reporting.
struct MinedNegatives {
  std::vector<corpus::Passage> passages;  // ascending scorer raw score, ties by passage_id
  std::vector<double> scores;
  std::string warning;  // empty when the request was fully satisfied
};

/// Returns the k candidates with the lowest raw scorer output (ties by
/// passage_id) in ascending score order.
MinedNegatives least_k(const Query& query, std::vector<corpus::Passage> candidates,
                       backend::BackendClient& scorer, std::size_t k);

/// Samples pool_size passages from other documents (all of them if fewer
/// exist), scores them against the query and keeps the k least relevant.
MinedNegatives mine_random_negatives(const Query& query, const corpus::Passage& positive,
                                     const corpus::PassageTable& passages,
                                     backend::BackendClient& scorer, std::size_t pool_size,
                                     std::size_t k, std::uint64_t seed);

/// The k least relevant other passages of the positive's document. Fewer than
/// k come back, with a warning, when the document is too short.
MinedNegatives mine_indoc_negatives(const Query& query, const corpus::Passage& positive,
                                    const corpus::PassageTable& passages,
                                    backend::BackendClient& scorer, std::size_t k);

/// Builds the dataset from queries whose gold_passage_id is in the corpus.
/// Every query mines from its own seed stream, so input order does not matter.
ContextRelevanceDataset build_dataset(std::span<const Query> queries, const corpus::PassageTable& passages,
                                      backend::BackendClient& scorer, const MiningSettings& settings);

/// Checks the dataset invariants against the corpus; returns the violations.
std::vector<std::string> check_dataset(const ContextRelevanceDataset& dataset,
                                       const corpus::PassageTable& passages);

Json to_json(const DatasetItem& item);
DatasetItem item_from_json(const Json& record);
Json metadata_json(const ContextRelevanceDataset& dataset);

/// Items go to `path` as JSON Lines; settings and warnings to the sidecar
/// `<path>.meta.json`.
void write_dataset(const std::filesystem::path& path, const ContextRelevanceDataset& dataset);
/// Reads items; the sidecar is optional so external datasets load as-is.
ContextRelevanceDataset read_dataset(const std::filesystem::path& path);
std::filesystem::path metadata_path(const std::filesystem::path& path);

}  // namespace rageval::mining
