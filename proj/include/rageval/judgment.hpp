#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "rageval/util.hpp"

namespace rageval {

/// Proxy ground truth for one query from one reranker (or "ensemble"):
/// the candidate pool reordered by calibrated probability.
struct Judgment {
  std::string query_id;
  std::string backend_id;
  double threshold = 0.5;
  std::vector<std::string> candidate_pool;  // BM25 order
  std::vector<std::string> ranked;          // non-increasing gain, ties by passage_id
  std::set<std::string> relevant_set;
  std::map<std::string, double> gains;

  bool evaluable_for_recall() const { return !relevant_set.empty(); }
};

Json to_json(const Judgment& judgment);
Judgment judgment_from_json(const Json& record);

}  // namespace rageval
