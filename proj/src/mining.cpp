#include "rageval/mining.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "rageval/error.hpp"

namespace rageval::mining {

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kPositive:
      return "positive";
    case Strategy::kRandomNegative:
      return "random_negative";
    case Strategy::kInDocumentNegative:
      return "in_document_negative";
  }
  return "positive";
}

Strategy strategy_from_string(std::string_view name) {
  if (name == "positive") return Strategy::kPositive;
  if (name == "random_negative") return Strategy::kRandomNegative;
  if (name == "in_document_negative") return Strategy::kInDocumentNegative;
  fail(ErrorCode::kCorruption, fmt::format("unknown strategy '{}'", name));
}

MinedNegatives least_k(const Query& query, std::vector<corpus::Passage> candidates,
                       backend::BackendClient& scorer, std::size_t k) {
  MinedNegatives out;
  if (candidates.empty() || k == 0) return out;
  std::vector<std::string> texts;
  texts.reserve(candidates.size());
  for (const auto& p : candidates) texts.push_back(p.text);
  const auto response = scorer.rerank(query.text, texts);

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t keep = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (response.scores[a] != response.scores[b]) return response.scores[a] < response.scores[b];
                      return candidates[a].passage_id < candidates[b].passage_id;
                    });
  for (std::size_t i = 0; i < keep; ++i) {
    out.passages.push_back(std::move(candidates[order[i]]));
    out.scores.push_back(response.scores[order[i]]);
  }
  return out;
}

MinedNegatives mine_random_negatives(const Query& query, const corpus::Passage& positive,
                                     const corpus::PassageTable& passages,
                                     backend::BackendClient& scorer, std::size_t pool_size,
                                     std::size_t k, std::uint64_t seed) {
  require(k >= 1 && pool_size >= k, "random mining needs pool_size >= k >= 1");
  std::vector<const corpus::Passage*> eligible;
  for (const auto& p : passages.all()) {
    if (p.doc_id != positive.doc_id) eligible.push_back(&p);
  }
  if (eligible.empty()) {
    fail(ErrorCode::kPrecondition,
         fmt::format("query '{}': no eligible passages outside document '{}'", query.query_id, positive.doc_id));
  }
  std::string warning;
  if (eligible.size() < pool_size) {
    warning = fmt::format("query '{}': random pool shrunk from {} to {} eligible passages", query.query_id,
                          pool_size, eligible.size());
  }
  Rng rng(seed);
  std::vector<corpus::Passage> pool;
  for (const auto i : rng.sample_indices(eligible.size(), std::min(pool_size, eligible.size()))) {
    pool.push_back(*eligible[i]);
  }
  auto out = least_k(query, std::move(pool), scorer, k);
  out.warning = std::move(warning);
  return out;
}

MinedNegatives mine_indoc_negatives(const Query& query, const corpus::Passage& positive,
                                    const corpus::PassageTable& passages,
                                    backend::BackendClient& scorer, std::size_t k) {
  require(k >= 1, "in-document mining needs k >= 1");
  std::vector<corpus::Passage> candidates;
  for (const auto& p : passages.all()) {
    if (p.doc_id == positive.doc_id && p.passage_id != positive.passage_id) candidates.push_back(p);
  }
  const std::size_t available = candidates.size();
  auto out = least_k(query, std::move(candidates), scorer, k);
  if (available < k) {
    out.warning = fmt::format("query '{}': document '{}' has {} other passages, wanted {}", query.query_id,
                              positive.doc_id, available, k);
  }
  return out;
}

ContextRelevanceDataset build_dataset(std::span<const Query> queries, const corpus::PassageTable& passages,
                                      backend::BackendClient& scorer, const MiningSettings& settings) {
  std::vector<const Query*> ordered;
  std::set<std::string_view> seen;
  for (const auto& q : queries) {
    if (!seen.insert(q.query_id).second) {
      fail(ErrorCode::kPrecondition, fmt::format("duplicate query_id '{}'", q.query_id));
    }
    if (!q.gold_passage_id || passages.find(*q.gold_passage_id) == nullptr) {
      fail(ErrorCode::kPrecondition,
           fmt::format("query '{}': positive passage is not in the corpus", q.query_id));
    }
    ordered.push_back(&q);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const Query* a, const Query* b) { return a->query_id < b->query_id; });

  struct PerQuery {
    MinedNegatives random;
    MinedNegatives indoc;
  };
  std::vector<PerQuery> mined(ordered.size());
  const auto workers = static_cast<std::size_t>(std::max(1, scorer.profile().max_in_flight));
  parallel_for(ordered.size(), workers, [&](std::size_t i) {
    const Query& q = *ordered[i];
    const auto& positive = passages.at(*q.gold_passage_id);
    if (settings.random_negatives > 0) {
      mined[i].random = mine_random_negatives(q, positive, passages, scorer, settings.pool_size,
                                              settings.random_negatives,
                                              derive_seed(settings.seed, q.query_id + "/random"));
    }
    if (settings.indoc_negatives > 0) {
      mined[i].indoc = mine_indoc_negatives(q, positive, passages, scorer, settings.indoc_negatives);
    }
  });

  ContextRelevanceDataset dataset;
  dataset.settings = settings;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const Query& q = *ordered[i];
    const auto& positive = passages.at(*q.gold_passage_id);
    auto add = [&](const corpus::Passage& p, bool label, Strategy strategy) {
      dataset.items.push_back({q.query_id, q.text, p.passage_id, p.text, label, strategy});
    };
    add(positive, true, Strategy::kPositive);
    for (const auto& p : mined[i].random.passages) add(p, false, Strategy::kRandomNegative);
    for (const auto& p : mined[i].indoc.passages) add(p, false, Strategy::kInDocumentNegative);
    if (mined[i].random.passages.size() < settings.random_negatives ||
        mined[i].indoc.passages.size() < settings.indoc_negatives) {
      dataset.short_queries.push_back(q.query_id);
    }
    for (const auto* w : {&mined[i].random.warning, &mined[i].indoc.warning}) {
      if (!w->empty()) dataset.warnings.push_back(*w);
    }
  }
  return dataset;
}

std::vector<std::string> check_dataset(const ContextRelevanceDataset& dataset,
                                       const corpus::PassageTable& passages) {
  std::vector<std::string> problems;
  std::map<std::string, std::vector<const DatasetItem*>> by_query;
  for (const auto& item : dataset.items) by_query[item.query_id].push_back(&item);
  const std::set<std::string> short_queries(dataset.short_queries.begin(), dataset.short_queries.end());

  for (const auto& [query_id, items] : by_query) {
    const DatasetItem* positive = nullptr;
    std::size_t positives = 0;
    std::size_t random = 0;
    std::size_t indoc = 0;
    for (const auto* item : items) {
      if (item->label != (item->strategy == Strategy::kPositive)) {
        problems.push_back(fmt::format("{}: label disagrees with strategy on {}", query_id, item->passage_id));
      }
      if (item->label) {
        ++positives;
        positive = item;
      } else if (item->strategy == Strategy::kRandomNegative) {
        ++random;
      } else {
        ++indoc;
      }
    }
    if (positives != 1) {
      problems.push_back(fmt::format("{}: {} positives", query_id, positives));
      continue;
    }
    const bool is_short = short_queries.count(query_id) > 0;
    const auto& s = dataset.settings;
    if (is_short ? (random > s.random_negatives || indoc > s.indoc_negatives)
                 : (random != s.random_negatives || indoc != s.indoc_negatives)) {
      problems.push_back(fmt::format("{}: {} random and {} in-document negatives, expected {} and {}", query_id,
                                     random, indoc, s.random_negatives, s.indoc_negatives));
    }
    const auto* gold = passages.find(positive->passage_id);
    if (gold == nullptr) {
      problems.push_back(fmt::format("{}: positive {} not in corpus", query_id, positive->passage_id));
      continue;
    }
    std::set<std::string> negative_ids;
    for (const auto* item : items) {
      if (item->label) continue;
      if (item->passage_id == positive->passage_id) {
        problems.push_back(fmt::format("{}: negative repeats the positive", query_id));
      }
      if (!negative_ids.insert(item->passage_id).second) {
        problems.push_back(fmt::format("{}: duplicate negative {}", query_id, item->passage_id));
      }
      const auto* p = passages.find(item->passage_id);
      if (p == nullptr) {
        problems.push_back(fmt::format("{}: negative {} not in corpus", query_id, item->passage_id));
        continue;
      }
      const bool same_doc = p->doc_id == gold->doc_id;
      if (item->strategy == Strategy::kInDocumentNegative && !same_doc) {
        problems.push_back(fmt::format("{}: in-document negative {} from another document", query_id, p->passage_id));
      }
      if (item->strategy == Strategy::kRandomNegative && same_doc) {
        problems.push_back(fmt::format("{}: random negative {} from the positive's document", query_id, p->passage_id));
      }
    }
  }
  return problems;
}

Json to_json(const DatasetItem& item) {
  Json j;
  j["query_id"] = item.query_id;
  j["query_text"] = item.query_text;
  j["passage_id"] = item.passage_id;
  j["passage_text"] = item.passage_text;
  j["label"] = item.label;
  j["strategy"] = to_string(item.strategy);
  return j;
}

DatasetItem item_from_json(const Json& record) {
  try {
    DatasetItem item;
    item.query_id = record.at("query_id").get<std::string>();
    item.query_text = record.at("query_text").get<std::string>();
    item.passage_id = record.at("passage_id").get<std::string>();
    item.passage_text = record.at("passage_text").get<std::string>();
    item.label = record.at("label").get<bool>();
    item.strategy = strategy_from_string(record.at("strategy").get<std::string>());
    return item;
  } catch (const Json::exception& e) {
    fail(ErrorCode::kCorruption, fmt::format("malformed dataset item: {}", e.what()));
  }
}

Json metadata_json(const ContextRelevanceDataset& dataset) {
  Json j;
  j["random_negatives"] = dataset.settings.random_negatives;
  j["indoc_negatives"] = dataset.settings.indoc_negatives;
  j["negative_allocation"] = "one-list-per-strategy";
  j["pool_size"] = dataset.settings.pool_size;
  j["seed"] = dataset.settings.seed;
  j["short_queries"] = dataset.short_queries;
  j["warnings"] = dataset.warnings;
  return j;
}

std::filesystem::path metadata_path(const std::filesystem::path& path) {
  auto meta = path;
  meta += ".meta.json";
  return meta;
}

void write_dataset(const std::filesystem::path& path, const ContextRelevanceDataset& dataset) {
  std::vector<Json> records;
  records.reserve(dataset.items.size());
  for (const auto& item : dataset.items) records.push_back(to_json(item));
  write_jsonl(path, records);
  write_file(metadata_path(path), metadata_json(dataset).dump(2) + "\n");
}

ContextRelevanceDataset read_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kNotFound, fmt::format("dataset {} does not exist", path.string()));
  }
  ContextRelevanceDataset dataset;
  for (const auto& record : read_jsonl(path)) dataset.items.push_back(item_from_json(record));
  const auto meta = metadata_path(path);
  if (std::filesystem::exists(meta)) {
    try {
      const auto j = Json::parse(read_file(meta));
      dataset.settings.random_negatives = j.value("random_negatives", std::size_t{1});
      dataset.settings.indoc_negatives = j.value("indoc_negatives", std::size_t{1});
      dataset.settings.pool_size = j.value("pool_size", std::size_t{256});
      dataset.settings.seed = j.value("seed", std::uint64_t{0});
      dataset.short_queries = j.value("short_queries", std::vector<std::string>{});
      dataset.warnings = j.value("warnings", std::vector<std::string>{});
    } catch (const Json::exception& e) {
      fail(ErrorCode::kCorruption, fmt::format("malformed dataset metadata {}: {}", meta.string(), e.what()));
    }
  }
  return dataset;
}

}  // namespace rageval::mining
