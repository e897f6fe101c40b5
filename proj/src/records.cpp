#include <set>

#include <fmt/format.h>

#include "rageval/error.hpp"
#include "rageval/judgment.hpp"
#include "rageval/query.hpp"

namespace rageval {
namespace {

std::optional<std::string> optional_string(const Json& record, const char* key) {
  if (!record.contains(key) || record.at(key).is_null()) return std::nullopt;
  return record.at(key).get<std::string>();
}

}  // namespace

Query query_from_json(const Json& record) {
  try {
    Query q;
    q.query_id = record.at("query_id").get<std::string>();
    if (record.contains("question")) {
      q.text = record.at("question").get<std::string>();
    } else {
      q.text = record.at("text").get<std::string>();
    }
    q.gold_passage_id = optional_string(record, "gold_passage_id");
    q.gold_passage = optional_string(record, "gold_passage");
    q.gold_doc_id = optional_string(record, "gold_doc_id");
    q.gold_answer = optional_string(record, "gold_answer");
    return q;
  } catch (const Json::exception& e) {
    fail(ErrorCode::kConfig, fmt::format("malformed query record: {}", e.what()));
  }
}

Json to_json(const Query& query) {
  Json j;
  j["query_id"] = query.query_id;
  j["text"] = query.text;
  if (query.gold_passage_id) j["gold_passage_id"] = *query.gold_passage_id;
  if (query.gold_passage) j["gold_passage"] = *query.gold_passage;
  if (query.gold_doc_id) j["gold_doc_id"] = *query.gold_doc_id;
  if (query.gold_answer) j["gold_answer"] = *query.gold_answer;
  return j;
}

std::vector<Query> read_queries(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kNotFound, fmt::format("query file {} does not exist", path.string()));
  }
  std::vector<Query> queries;
  std::set<std::string> seen;
  for (const auto& record : read_jsonl(path)) {
    auto q = query_from_json(record);
    if (!seen.insert(q.query_id).second) {
      fail(ErrorCode::kConfig, fmt::format("duplicate query_id '{}' in {}", q.query_id, path.string()));
    }
    queries.push_back(std::move(q));
  }
  return queries;
}

Json to_json(const Judgment& judgment) {
  Json j;
  j["query_id"] = judgment.query_id;
  j["backend_id"] = judgment.backend_id;
  j["threshold"] = judgment.threshold;
  j["candidate_pool"] = judgment.candidate_pool;
  j["ranked"] = judgment.ranked;
  j["relevant_set"] = std::vector<std::string>(judgment.relevant_set.begin(), judgment.relevant_set.end());
  Json gains = Json::object();
  for (const auto& id : judgment.ranked) {
    const auto it = judgment.gains.find(id);
    if (it != judgment.gains.end()) gains[id] = it->second;
  }
  j["gains"] = std::move(gains);
  return j;
}

Judgment judgment_from_json(const Json& record) {
  try {
    Judgment j;
    j.query_id = record.at("query_id").get<std::string>();
    j.backend_id = record.at("backend_id").get<std::string>();
    j.threshold = record.value("threshold", 0.5);
    j.candidate_pool = record.value("candidate_pool", std::vector<std::string>{});
    j.ranked = record.at("ranked").get<std::vector<std::string>>();
    for (const auto& id : record.at("relevant_set")) j.relevant_set.insert(id.get<std::string>());
    for (const auto& [id, gain] : record.at("gains").items()) j.gains[id] = gain.get<double>();
    return j;
  } catch (const Json::exception& e) {
    fail(ErrorCode::kCorruption, fmt::format("malformed judgment record: {}", e.what()));
  }
}

}  // namespace rageval
