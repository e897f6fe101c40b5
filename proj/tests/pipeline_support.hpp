#pragma once

// Pipeline fixtures shared by the runner tests and the acceptance binary.

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rageval/runner.hpp"
#include "rageval/util.hpp"

namespace testing::pipeline {

namespace fs = std::filesystem;
using rageval::Json;

inline fs::path source_dir() { return fs::path(RAGEVAL_SOURCE_DIR); }
inline fs::path golden_dir() { return source_dir() / "tests" / "fixtures" / "golden"; }

/// The sample stub config with its inputs pinned to the source tree and its
/// outputs redirected under work.
inline Json sample_config(const fs::path& work) {
  auto c = Json::parse(rageval::read_file(source_dir() / "configs" / "sample_stub.json"));
  c["documents"] = (source_dir() / "data" / "sample_corpus").string();
  c["queries"] = (source_dir() / "data" / "sample_queries.jsonl").string();
  c["qa_dataset"] = (source_dir() / "data" / "sample_qa.jsonl").string();
  c["store_root"] = (work / "store").string();
  c["runs_root"] = (work / "runs").string();
  return c;
}

/// 130 one-sentence documents, 5 queries and two rerankers whose scores come
/// from fixtures: one returning logits, one returning probabilities.
inline Json golden_config(const fs::path& work, const std::vector<std::string>& rerankers = {"rerank-logits",
                                                                                            "rerank-probs"}) {
  const auto dir = golden_dir();
  Json c;
  c["name"] = "golden";
  c["documents"] = (dir / "docs.jsonl").string();
  c["corpus_prefix"] = "golden";
  c["chunk_budgets"] = {512};
  c["store_root"] = (work / "store").string();
  c["runs_root"] = (work / "runs").string();
  c["queries"] = (dir / "queries.jsonl").string();
  c["backends"] = Json::array();
  c["backends"].push_back({{"backend_id", "rerank-logits"},
                           {"kind", "rerank"},
                           {"base_url", "stub:?fixture=" + (dir / "rerank_logits.json").string()},
                           {"model_name", "stub-logits"}});
  c["backends"].push_back({{"backend_id", "rerank-probs"},
                           {"kind", "rerank"},
                           {"base_url", "stub:?fixture=" + (dir / "rerank_probs.json").string()},
                           {"model_name", "stub-probs"},
                           {"normalized", true}});
  c["retrievers"] = {"bm25"};
  c["rerankers"] = rerankers;
  c["retrieval"] = {{"depth", 50}, {"candidate_k", 100}, {"metric_k", {1, 3, 5, 10, 20, 50}}, {"gain_mode", "graded"}};
  c["workers"] = 2;
  return c;
}

inline rageval::runner::ExperimentConfig config(const Json& record, const fs::path& work) {
  auto c = rageval::runner::config_from_json(record, work);
  rageval::runner::validate(c);
  return c;
}

/// Empty when the produced judgments equal the golden file (ids exact, gains
/// within 1e-12); otherwise a description of the first difference.
inline std::string compare_judgments(const std::vector<Json>& produced, const std::vector<Json>& golden) {
  std::map<std::pair<std::string, std::string>, Json> by_key;
  for (const auto& j : produced) by_key[{j.at("query_id"), j.at("backend_id")}] = j;
  if (by_key.size() != golden.size()) {
    return "produced " + std::to_string(by_key.size()) + " judgments, golden has " + std::to_string(golden.size());
  }
  for (const auto& g : golden) {
    const std::string where = g.at("query_id").get<std::string>() + "/" + g.at("backend_id").get<std::string>();
    const auto it = by_key.find({g.at("query_id"), g.at("backend_id")});
    if (it == by_key.end()) return "missing judgment " + where;
    const auto& p = it->second;
    for (const char* key : {"candidate_pool", "ranked", "relevant_set"}) {
      if (p.at(key) != g.at(key)) return where + ": " + key + " differs";
    }
    if (std::abs(p.at("threshold").get<double>() - g.at("threshold").get<double>()) > 1e-12) {
      return where + ": threshold differs";
    }
    if (p.at("gains").size() != g.at("gains").size()) return where + ": gain count differs";
    for (const auto& [id, gain] : g.at("gains").items()) {
      if (!p.at("gains").contains(id) || std::abs(p.at("gains").at(id).get<double>() - gain.get<double>()) > 1e-12) {
        return where + ": gain of " + id + " differs";
      }
    }
  }
  return {};
}

/// Same contract for aggregate retrieval rows; means within 1e-12.
inline std::string compare_aggregate(const rageval::metrics::AggregateReport& produced, const std::vector<Json>& golden) {
  if (produced.rows.size() != golden.size()) {
    return "produced " + std::to_string(produced.rows.size()) + " rows, golden has " + std::to_string(golden.size());
  }
  for (const auto& g : golden) {
    const auto metric = g.at("metric").get<std::string>();
    const auto k = g.at("k").get<std::size_t>();
    const std::string where = metric + "@" + std::to_string(k);
    const rageval::metrics::AggregateRow* row = nullptr;
    for (const auto& r : produced.rows) {
      if (r.metric == metric && r.k == k && r.retriever_id == g.at("retriever_id") && r.corpus_id == g.at("corpus_id")) {
        row = &r;
      }
    }
    if (row == nullptr) return "missing row " + where;
    if (row->backends != g.at("backends") || row->evaluated != g.at("evaluated") ||
        row->unevaluable != g.at("unevaluable")) {
      return where + ": counts differ";
    }
    if (g.at("mean").is_null() != !row->mean.has_value()) return where + ": evaluability differs";
    if (row->mean && std::abs(*row->mean - g.at("mean").get<double>()) > 1e-12) {
      return where + ": mean " + std::to_string(*row->mean) + " vs " + g.at("mean").dump();
    }
  }
  return {};
}

}  // namespace testing::pipeline
