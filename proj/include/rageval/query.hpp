#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rageval/util.hpp"

namespace rageval {

/// A question plus whatever gold material the dataset provides.
struct Query {
  std::string query_id;
  std::string text;
  std::optional<std::string> gold_passage_id;
  std::optional<std::string> gold_passage;  // gold passage text (QA datasets)
  std::optional<std::string> gold_doc_id;
  std::optional<std::string> gold_answer;
};

/// Accepts {query_id, question|text, gold_passage_id?, gold_passage?,
/// gold_doc_id?, gold_answer?} records. Duplicate query_ids are rejected.
std::vector<Query> read_queries(const std::filesystem::path& path);
Query query_from_json(const Json& record);
Json to_json(const Query& query);

}  // namespace rageval
