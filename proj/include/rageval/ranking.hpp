#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rageval/util.hpp"

namespace rageval {

/// One entry of a ranked result list. Ranks are 1-based; scores never increase
/// with rank and equal scores are ordered by ascending passage_id.
struct ScoredHit {
  std::string passage_id;
  double score = 0.0;
  std::size_t rank = 0;

  bool operator==(const ScoredHit&) const = default;
};

/// Orders (passage_id, score) candidates by descending score, ties by
/// ascending passage_id, keeps the first k and assigns ranks.
std::vector<ScoredHit> rank_top_k(std::vector<std::pair<std::string, double>> candidates,
                                  std::size_t k);

std::vector<std::string> passage_ids(const std::vector<ScoredHit>& hits);

Json to_json(const ScoredHit& hit);
ScoredHit hit_from_json(const Json& record);

}  // namespace rageval
