#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rageval/backend.hpp"
#include "rageval/corpus.hpp"
#include "rageval/judgment.hpp"
#include "rageval/lexical.hpp"
#include "rageval/metrics.hpp"
#include "rageval/mining.hpp"
#include "rageval/query.hpp"
#include "rageval/util.hpp"

namespace rageval::rerank {

inline constexpr double kDefaultThreshold = 0.5;
inline constexpr std::string_view kEnsembleId = "ensemble";

struct RerankScore {
  std::string query_id;
  std::string passage_id;
  std::string backend_id;
  double raw_score = 0.0;
  double probability = 0.0;
  bool relevant = false;
};

/// Logistic for logit backends, identity for normalized ones.
double calibrate(double raw_score, bool normalized);

/// Scores every candidate against the query in batches of `batch_size`. The
/// backend's response flag must agree with its profile's `normalized`.
std::vector<RerankScore> rerank_pairs(const Query& query, std::span<const corpus::Passage> candidates,
                                      backend::BackendClient& client, double threshold = kDefaultThreshold,
                                      std::size_t batch_size = 64);

/// relevant = probability >= threshold, for 0 < threshold < 1.
std::vector<RerankScore> classify_context(std::vector<RerankScore> scores, double threshold);

/// Reorders the pool by probability (ties by passage_id) and keeps the
/// relevant flags as the relevant set.
Judgment make_judgment(std::string_view query_id, std::string_view backend_id,
                       std::vector<std::string> candidate_pool, std::span<const RerankScore> scores,
                       double threshold);

/// Per-passage mean probability over per-backend judgments of the same pool.
Judgment ensemble_judgment(std::span<const Judgment> judgments, double threshold = kDefaultThreshold);

struct GroundTruthSettings {
  std::size_t candidate_k = 100;
  double default_threshold = kDefaultThreshold;
  std::map<std::string, double> thresholds;  // per backend_id

  double threshold_for(const std::string& backend_id) const;
};

struct SkippedBackend {
  std::string backend_id;
  std::string reason;
};

struct GroundTruth {
  std::string query_id;
  std::vector<std::string> candidate_pool;  // BM25 top candidate_k
  std::vector<Judgment> judgments;          // one per backend that answered
  std::vector<SkippedBackend> skipped;
  bool empty_pool = false;
};

/// One judgment per reranker over the same BM25 candidate pool. A backend
/// that keeps failing at the transport or protocol level is skipped for this
/// query and recorded.
GroundTruth build_ground_truth(const Query& query, const lexical::Bm25Index& index,
                               const corpus::PassageTable& passages,
                               std::span<backend::BackendClient* const> rerankers,
                               const GroundTruthSettings& settings);

struct ClassifierReport {
  std::string subset;
  std::string backend_id;
  double threshold = kDefaultThreshold;
  metrics::ClassifierMetrics metrics;
  std::size_t items = 0;
  std::size_t skipped = 0;  // items whose query could not be scored
};

/// Scores every dataset item with the reranker and compares the thresholded
/// prediction against the item label. Queries are scored in parallel.
ClassifierReport evaluate_reranker_classifier(const mining::ContextRelevanceDataset& dataset,
                                              backend::BackendClient& client, double threshold,
                                              std::string_view subset);

Json to_json(const RerankScore& score);
Json to_json(const GroundTruth& truth);
Json to_json(const ClassifierReport& report);

}  // namespace rageval::rerank
