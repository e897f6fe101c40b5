#include "rageval/ranking.hpp"

#include <algorithm>

namespace rageval {

std::vector<ScoredHit> rank_top_k(std::vector<std::pair<std::string, double>> candidates,
                                  std::size_t k) {
  auto before = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  const std::size_t keep = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                    candidates.end(), before);
  std::vector<ScoredHit> hits;
  hits.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    hits.push_back({std::move(candidates[i].first), candidates[i].second, i + 1});
  }
  return hits;
}

std::vector<std::string> passage_ids(const std::vector<ScoredHit>& hits) {
  std::vector<std::string> ids;
  ids.reserve(hits.size());
  for (const auto& hit : hits) ids.push_back(hit.passage_id);
  return ids;
}

Json to_json(const ScoredHit& hit) {
  Json j;
  j["passage_id"] = hit.passage_id;
  j["score"] = hit.score;
  j["rank"] = hit.rank;
  return j;
}

ScoredHit hit_from_json(const Json& record) {
  return {record.at("passage_id").get<std::string>(), record.at("score").get<double>(),
          record.at("rank").get<std::size_t>()};
}

}  // namespace rageval
