#include "rageval/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "rageval/error.hpp"
#include "rageval/text.hpp"

namespace rageval::lexical {
namespace {

constexpr std::string_view kFormat = "rageval-bm25";
constexpr int kFormatVersion = 1;

void validate(const Bm25Params& params) {
  require(params.k1 > 0.0, fmt::format("BM25 k1 must be > 0, got {}", params.k1));
  require(params.b >= 0.0 && params.b <= 1.0,
          fmt::format("BM25 b must lie in [0, 1], got {}", params.b));
}

}  // namespace

std::size_t Bm25Index::document_frequency(const std::string& term) const {
  const auto it = postings.find(term);
  return it == postings.end() ? 0 : it->second.size();
}

double idf(std::size_t passage_count, std::size_t document_frequency) {
  const auto n = static_cast<double>(passage_count);
  const auto df = static_cast<double>(document_frequency);
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

Bm25Index build_index(std::span<const corpus::Passage> passages, std::string_view corpus_id,
                      Bm25Params params) {
  validate(params);
  if (passages.empty()) fail(ErrorCode::kPrecondition, "cannot index an empty corpus");

  std::vector<const corpus::Passage*> ordered;
  ordered.reserve(passages.size());
  for (const auto& p : passages) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->passage_id < b->passage_id; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    require(ordered[i - 1]->passage_id != ordered[i]->passage_id,
            fmt::format("duplicate passage_id '{}'", ordered[i]->passage_id));
  }

  Bm25Index index;
  index.corpus_id = std::string(corpus_id);
  index.params = params;
  std::uint64_t total_length = 0;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const auto terms = text::analyze(ordered[i]->text);
    std::map<std::string, std::uint32_t> counts;
    for (const auto& term : terms) ++counts[term];
    for (auto& [term, tf] : counts) {
      index.postings[term].push_back({static_cast<std::uint32_t>(i), tf});
    }
    index.passage_ids.push_back(ordered[i]->passage_id);
    index.doc_lengths.push_back(static_cast<std::uint32_t>(terms.size()));
    total_length += terms.size();
  }
  index.avg_doc_length = static_cast<double>(total_length) / static_cast<double>(ordered.size());
  return index;
}

LexicalResult bm25_search(const Bm25Index& index, std::string_view query, std::size_t k) {
  require(k >= 1, "bm25_search requires k >= 1");
  const auto analyzed = text::analyze(query);
  const std::set<std::string> terms(analyzed.begin(), analyzed.end());
  LexicalResult result;
  if (terms.empty()) {
    result.empty_query = true;
    return result;
  }

  const double k1 = index.params.k1;
  const double b = index.params.b;
  const std::size_t n = index.passage_count();
  std::unordered_map<std::uint32_t, double> accumulators;
  for (const auto& term : terms) {
    const auto it = index.postings.find(term);
    if (it == index.postings.end()) continue;
    const double weight = idf(n, it->second.size());
    for (const auto& posting : it->second) {
      const double tf = posting.term_frequency;
      const double length_ratio = index.doc_lengths[posting.passage] / index.avg_doc_length;
      accumulators[posting.passage] +=
          weight * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * length_ratio));
    }
  }

  std::vector<std::pair<std::string, double>> candidates;
  candidates.reserve(accumulators.size());
  for (const auto& [passage, score] : accumulators) {
    candidates.emplace_back(index.passage_ids[passage], score);
  }
  result.hits = rank_top_k(std::move(candidates), k);
  return result;
}

std::string serialize(const Bm25Index& index) {
  Json j;
  j["format"] = kFormat;
  j["version"] = kFormatVersion;
  j["corpus_id"] = index.corpus_id;
  j["k1"] = index.params.k1;
  j["b"] = index.params.b;
  j["passage_count"] = index.passage_count();
  j["avg_doc_length"] = index.avg_doc_length;
  j["passage_ids"] = index.passage_ids;
  j["doc_lengths"] = index.doc_lengths;
  Json postings = Json::object();
  for (const auto& [term, list] : index.postings) {
    Json entries = Json::array();
    for (const auto& p : list) entries.push_back({p.passage, p.term_frequency});
    postings[term] = std::move(entries);
  }
  j["postings"] = std::move(postings);
  return j.dump() + "\n";
}

Bm25Index deserialize(std::string_view bytes) {
  try {
    const auto j = Json::parse(bytes);
    if (j.at("format").get<std::string>() != kFormat ||
        j.at("version").get<int>() != kFormatVersion) {
      fail(ErrorCode::kCorruption, "unsupported BM25 index format");
    }
    Bm25Index index;
    index.corpus_id = j.at("corpus_id").get<std::string>();
    index.params = {j.at("k1").get<double>(), j.at("b").get<double>()};
    index.avg_doc_length = j.at("avg_doc_length").get<double>();
    index.passage_ids = j.at("passage_ids").get<std::vector<std::string>>();
    index.doc_lengths = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
    for (const auto& [term, entries] : j.at("postings").items()) {
      auto& list = index.postings[term];
      for (const auto& e : entries) list.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>()});
    }
    if (index.passage_ids.size() != index.doc_lengths.size() ||
        index.passage_ids.size() != j.at("passage_count").get<std::size_t>()) {
      fail(ErrorCode::kCorruption, "BM25 index tables disagree in length");
    }
    for (const auto& [term, list] : index.postings) {
      for (const auto& p : list) {
        if (p.passage >= index.passage_ids.size()) {
          fail(ErrorCode::kCorruption, fmt::format("posting for '{}' names an unknown passage", term));
        }
      }
    }
    return index;
  } catch (const Json::exception& e) {
    fail(ErrorCode::kCorruption, fmt::format("malformed BM25 index: {}", e.what()));
  }
}

std::filesystem::path index_path(const std::filesystem::path& store_root, std::string_view corpus_id) {
  return corpus::corpus_dir(store_root, corpus_id) / "bm25.json";
}

Bm25Index build_and_persist(const std::filesystem::path& store_root, std::string_view corpus_id,
                            Bm25Params params) {
  validate(params);
  const auto passages = corpus::load_passages(store_root, corpus_id);
  auto index = build_index(passages, corpus_id, params);
  write_file(index_path(store_root, corpus_id), serialize(index));
  return index;
}

Bm25Index load_index(const std::filesystem::path& store_root, std::string_view corpus_id) {
  const auto path = index_path(store_root, corpus_id);
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kNotFound, fmt::format("no BM25 index for corpus '{}'", corpus_id));
  }
  return deserialize(read_file(path));
}

}  // namespace rageval::lexical
