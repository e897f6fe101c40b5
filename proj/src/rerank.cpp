#include "rageval/rerank.hpp"

#include <algorithm>
#include <map>
#include <mutex>

#include <fmt/format.h>

#include "rageval/error.hpp"

namespace rageval::rerank {

double calibrate(double raw_score, bool normalized) {
  return normalized ? raw_score : backend::logistic(raw_score);
}

std::vector<RerankScore> rerank_pairs(const Query& query, std::span<const corpus::Passage> candidates,
                                      backend::BackendClient& client, double threshold,
                                      std::size_t batch_size) {
  require(!candidates.empty(), "rerank_pairs needs at least one candidate");
  require(batch_size >= 1, "batch_size must be >= 1");
  const bool normalized = client.profile().normalized;
  std::vector<RerankScore> scores;
  scores.reserve(candidates.size());
  for (std::size_t first = 0; first < candidates.size(); first += batch_size) {
    const auto batch = candidates.subspan(first, std::min(batch_size, candidates.size() - first));
    std::vector<std::string> texts;
    for (const auto& p : batch) texts.push_back(p.text);
    const auto response = client.rerank(query.text, texts);
    if (response.normalized != normalized) {
      fail(ErrorCode::kProtocol, fmt::format("backend '{}' answered normalized={} but its profile says {}",
                                             client.id(), response.normalized, normalized));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      RerankScore s;
      s.query_id = query.query_id;
      s.passage_id = batch[i].passage_id;
      s.backend_id = client.id();
      s.raw_score = response.scores[i];
      s.probability = calibrate(s.raw_score, normalized);
      if (s.probability < 0.0 || s.probability > 1.0) {
        fail(ErrorCode::kProtocol,
             fmt::format("backend '{}' declared normalized output but returned {}", client.id(), s.raw_score));
      }
      scores.push_back(std::move(s));
    }
  }
  return classify_context(std::move(scores), threshold);
}

std::vector<RerankScore> classify_context(std::vector<RerankScore> scores, double threshold) {
  require(threshold > 0.0 && threshold < 1.0, fmt::format("threshold must lie in (0, 1), got {}", threshold));
  for (auto& s : scores) s.relevant = s.probability >= threshold;
  return scores;
}

Judgment make_judgment(std::string_view query_id, std::string_view backend_id,
                       std::vector<std::string> candidate_pool, std::span<const RerankScore> scores,
                       double threshold) {
  Judgment j;
  j.query_id = std::string(query_id);
  j.backend_id = std::string(backend_id);
  j.threshold = threshold;
  j.candidate_pool = std::move(candidate_pool);
  for (const auto& s : scores) {
    j.gains[s.passage_id] = s.probability;
    j.ranked.push_back(s.passage_id);
    if (s.relevant) j.relevant_set.insert(s.passage_id);
  }
  std::sort(j.ranked.begin(), j.ranked.end(), [&](const std::string& a, const std::string& b) {
    const double ga = j.gains.at(a);
    const double gb = j.gains.at(b);
    if (ga != gb) return ga > gb;
    return a < b;
  });
  return j;
}

Judgment ensemble_judgment(std::span<const Judgment> judgments, double threshold) {
  require(!judgments.empty(), "ensemble needs at least one judgment");
  const auto& first = judgments.front();
  std::map<std::string, double> sums;
  for (const auto& j : judgments) {
    require(j.query_id == first.query_id, "ensemble judgments must share the query");
    require(j.candidate_pool == first.candidate_pool, "ensemble judgments must share the candidate pool");
    for (const auto& [id, gain] : j.gains) sums[id] += gain;
  }
  std::vector<RerankScore> merged;
  for (const auto& [id, total] : sums) {
    RerankScore s;
    s.query_id = first.query_id;
    s.passage_id = id;
    s.backend_id = std::string(kEnsembleId);
    s.probability = total / static_cast<double>(judgments.size());
    s.raw_score = s.probability;
    merged.push_back(std::move(s));
  }
  merged = classify_context(std::move(merged), threshold);
  return make_judgment(first.query_id, kEnsembleId, first.candidate_pool, merged, threshold);
}

double GroundTruthSettings::threshold_for(const std::string& backend_id) const {
  const auto it = thresholds.find(backend_id);
  return it == thresholds.end() ? default_threshold : it->second;
}

GroundTruth build_ground_truth(const Query& query, const lexical::Bm25Index& index,
                               const corpus::PassageTable& passages,
                               std::span<backend::BackendClient* const> rerankers,
                               const GroundTruthSettings& settings) {
  require(settings.candidate_k >= 1, "candidate_k must be >= 1");
  require(!rerankers.empty(), "ground truth needs at least one reranker");
  GroundTruth truth;
  truth.query_id = query.query_id;
  const auto hits = lexical::bm25_search(index, query.text, settings.candidate_k).hits;
  truth.candidate_pool = passage_ids(hits);
  if (truth.candidate_pool.empty()) {
    truth.empty_pool = true;
    return truth;
  }
  std::vector<corpus::Passage> candidates;
  for (const auto& id : truth.candidate_pool) candidates.push_back(passages.at(id));

  for (auto* client : rerankers) {
    const double threshold = settings.threshold_for(client->id());
    try {
      const auto scores = rerank_pairs(query, candidates, *client, threshold);
      truth.judgments.push_back(make_judgment(query.query_id, client->id(), truth.candidate_pool, scores, threshold));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTransport && e.code() != ErrorCode::kProtocol) throw;
      truth.skipped.push_back({client->id(), e.what()});
    }
  }
  return truth;
}

ClassifierReport evaluate_reranker_classifier(const mining::ContextRelevanceDataset& dataset,
                                              backend::BackendClient& client, double threshold,
                                              std::string_view subset) {
  require(!dataset.items.empty(), "classifier evaluation needs a non-empty dataset");
  require(threshold > 0.0 && threshold < 1.0, fmt::format("threshold must lie in (0, 1), got {}", threshold));

  std::map<std::string, std::vector<const mining::DatasetItem*>> by_query;
  for (const auto& item : dataset.items) by_query[item.query_id].push_back(&item);
  std::vector<const std::vector<const mining::DatasetItem*>*> groups;
  for (const auto& [id, items] : by_query) groups.push_back(&items);

  std::vector<std::vector<RerankScore>> scored(groups.size());
  std::vector<bool> skipped(groups.size(), false);
  parallel_for(groups.size(), static_cast<std::size_t>(std::max(1, client.profile().max_in_flight)),
               [&](std::size_t g) {
                 const auto& items = *groups[g];
                 Query q{items.front()->query_id, items.front()->query_text, {}, {}, {}, {}};
                 std::vector<corpus::Passage> candidates;
                 for (const auto* item : items) {
                   corpus::Passage p;
                   p.passage_id = item->passage_id;
                   p.text = item->passage_text;
                   candidates.push_back(std::move(p));
                 }
                 try {
                   scored[g] = rerank_pairs(q, candidates, client, threshold);
                 } catch (const Error& e) {
                   if (e.code() != ErrorCode::kTransport && e.code() != ErrorCode::kProtocol) throw;
                   skipped[g] = true;
                 }
               });

  ClassifierReport report;
  report.subset = std::string(subset);
  report.backend_id = client.id();
  report.threshold = threshold;
  report.items = dataset.items.size();
  metrics::ConfusionCounts counts;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& items = *groups[g];
    if (skipped[g]) {
      report.skipped += items.size();
      continue;
    }
    for (std::size_t i = 0; i < items.size(); ++i) counts.add(items[i]->label, scored[g][i].relevant);
  }
  report.metrics = metrics::classifier_metrics(counts);
  return report;
}

Json to_json(const RerankScore& score) {
  Json j;
  j["query_id"] = score.query_id;
  j["passage_id"] = score.passage_id;
  j["backend_id"] = score.backend_id;
  j["raw_score"] = score.raw_score;
  j["probability"] = score.probability;
  j["relevant"] = score.relevant;
  return j;
}

Json to_json(const GroundTruth& truth) {
  Json j;
  j["query_id"] = truth.query_id;
  j["candidate_pool"] = truth.candidate_pool;
  j["empty_pool"] = truth.empty_pool;
  Json skipped = Json::array();
  for (const auto& s : truth.skipped) skipped.push_back({{"backend_id", s.backend_id}, {"reason", s.reason}});
  j["skipped"] = std::move(skipped);
  return j;
}

Json to_json(const ClassifierReport& report) {
  Json j;
  j["subset"] = report.subset;
  j["backend_id"] = report.backend_id;
  j["threshold"] = report.threshold;
  j["items"] = report.items;
  j["skipped"] = report.skipped;
  j["metrics"] = metrics::to_json(report.metrics);
  return j;
}

}  // namespace rageval::rerank
