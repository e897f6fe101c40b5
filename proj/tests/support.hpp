#pragma once

// Shared test helpers and brute-force reference implementations. The
// reference code is written from the textbook definitions and deliberately
// shares nothing with the library beyond the data types.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rageval/backend.hpp"
#include "rageval/corpus.hpp"
#include "rageval/error.hpp"
#include "rageval/judgment.hpp"
#include "rageval/query.hpp"
#include "rageval/util.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() / ("rageval-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline rageval::corpus::Passage passage(const std::string& doc_id, std::size_t seq, const std::string& text) {
  rageval::corpus::Passage p;
  p.doc_id = doc_id;
  p.seq = seq;
  p.passage_id = rageval::corpus::make_passage_id(doc_id, seq);
  p.text = text;
  p.token_count = 1;
  p.chunk_budget = 512;
  return p;
}

inline rageval::backend::BackendProfile profile(const std::string& id, rageval::backend::Kind kind,
                                                const std::string& url = "stub:", bool normalized = false) {
  rageval::backend::BackendProfile p;
  p.backend_id = id;
  p.kind = kind;
  p.base_url = url;
  p.model_name = "model-" + id;
  p.normalized = normalized;
  p.retry_backoff = std::chrono::milliseconds(1);
  return p;
}

inline std::shared_ptr<rageval::backend::BackendClient> stub_client(
    const rageval::backend::BackendProfile& p, rageval::backend::StubTransport::Fixture fixture = {}) {
  return std::make_shared<rageval::backend::BackendClient>(
      p, std::make_shared<rageval::backend::StubTransport>(p, std::move(fixture)));
}

/// The code of the rageval::Error thrown by fn, or nullopt if it returns.
template <typename F>
std::optional<rageval::ErrorCode> error_code(F&& fn) {
  try {
    fn();
  } catch (const rageval::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// Random lowercase text drawn from a small vocabulary so terms repeat.
inline std::string random_words(std::mt19937_64& gen, std::size_t count, std::size_t vocabulary = 30) {
  std::string out;
  std::uniform_int_distribution<std::size_t> pick(0, vocabulary - 1);
  for (std::size_t i = 0; i < count; ++i) {
    if (i > 0) out += ' ';
    out += "w" + std::to_string(pick(gen));
  }
  return out;
}

/// A random multi-document corpus with queries whose gold passages are drawn
/// from it, plus an injected score for every (query, passage) pair.
struct MiningCase {
  std::vector<rageval::corpus::Passage> passages;
  std::vector<rageval::Query> queries;
  rageval::backend::StubTransport::Fixture scores;
};

inline MiningCase random_mining_case(std::mt19937_64& gen) {
  MiningCase c;
  const std::size_t docs = 2 + gen() % 7;
  for (std::size_t d = 0; d < docs; ++d) {
    const std::size_t n = 1 + gen() % 6;
    for (std::size_t s = 0; s < n; ++s) {
      c.passages.push_back(passage("doc" + std::to_string(d), s,
                                   "passage " + std::to_string(d) + " " + std::to_string(s) + " " + random_words(gen, 6)));
    }
  }
  const std::size_t queries = 1 + gen() % 6;
  std::uniform_real_distribution<double> score(-5.0, 5.0);
  for (std::size_t q = 0; q < queries; ++q) {
    rageval::Query query;
    query.query_id = "q" + std::to_string(q);
    query.text = "question " + std::to_string(q) + " " + random_words(gen, 4);
    query.gold_passage_id = c.passages[gen() % c.passages.size()].passage_id;
    for (const auto& p : c.passages) {
      // Coarse grid so ties happen and the id tie-break gets exercised.
      c.scores.rerank.push_back({query.text, p.text, std::round(score(gen) * 2.0) / 2.0});
    }
    c.queries.push_back(std::move(query));
  }
  return c;
}

/// A retrieved ranking and a judgment over a universe of at most 10 passages.
/// Gains sit on a coarse grid so ties are common.
struct MetricCase {
  std::vector<std::string> retrieved;
  rageval::Judgment judgment;
  std::size_t k = 1;
};

inline MetricCase random_metric_case(std::mt19937_64& gen) {
  MetricCase c;
  const std::size_t universe = 1 + gen() % 10;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < universe; ++i) ids.push_back("p" + std::to_string(i));

  auto pool = ids;
  std::shuffle(pool.begin(), pool.end(), gen);
  pool.resize(1 + gen() % universe);
  c.judgment.query_id = "q";
  c.judgment.backend_id = "r";
  c.judgment.candidate_pool = pool;
  for (const auto& id : pool) {
    const double gain = static_cast<double>(gen() % 11) / 10.0;
    c.judgment.gains[id] = gain;
    if (gain >= c.judgment.threshold) c.judgment.relevant_set.insert(id);
  }
  c.judgment.ranked = pool;
  std::sort(c.judgment.ranked.begin(), c.judgment.ranked.end(), [&](const auto& a, const auto& b) {
    const double ga = c.judgment.gains.at(a);
    const double gb = c.judgment.gains.at(b);
    return ga != gb ? ga > gb : a < b;
  });

  c.retrieved = ids;
  std::shuffle(c.retrieved.begin(), c.retrieved.end(), gen);
  c.retrieved.resize(gen() % (universe + 1));
  c.k = 1 + gen() % 12;
  return c;
}

// ---------------------------------------------------------------------------
// Reference implementations

namespace oracle {

inline std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!current.empty()) {
      out.push_back(current);
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(current);
  return out;
}

/// Closed-form Okapi BM25 over ASCII passages: every passage is scored
/// directly from its term list, no index.
inline std::vector<std::pair<std::string, double>> bm25(const std::vector<rageval::corpus::Passage>& passages,
                                                        const std::string& query, double k1 = 1.2,
                                                        double b = 0.75) {
  const double n = static_cast<double>(passages.size());
  std::vector<std::vector<std::string>> docs;
  double total_length = 0.0;
  for (const auto& p : passages) {
    docs.push_back(words(p.text));
    total_length += static_cast<double>(docs.back().size());
  }
  const double avg = total_length / n;
  const auto query_terms = words(query);
  const std::set<std::string> unique(query_terms.begin(), query_terms.end());

  std::vector<std::pair<std::string, double>> scored;
  for (std::size_t d = 0; d < passages.size(); ++d) {
    double score = 0.0;
    bool matched = false;
    for (const auto& term : unique) {
      const double tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), term));
      if (tf == 0.0) continue;
      matched = true;
      double df = 0.0;
      for (const auto& other : docs) df += std::find(other.begin(), other.end(), term) != other.end() ? 1.0 : 0.0;
      const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
      const double len = static_cast<double>(docs[d].size());
      score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
    }
    if (matched) scored.emplace_back(passages[d].passage_id, score);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  return scored;
}

/// The k lowest-scoring candidates under an injected score table, ties by id.
inline std::vector<std::string> least_k(const std::vector<rageval::corpus::Passage>& candidates,
                                        const std::string& query,
                                        const rageval::backend::StubTransport::Fixture& table, std::size_t k) {
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& p : candidates) {
    for (const auto& e : table.rerank) {
      if (e.query == query && e.passage == p.text) {
        scored.emplace_back(e.score, p.passage_id);
        break;
      }
    }
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back(scored[i].second);
  return out;
}

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  long double dot = 0.0L;
  long double na = 0.0L;
  long double nb = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / std::sqrt(na * nb));
}

inline std::vector<std::string> head(const std::vector<std::string>& ranking, std::size_t k) {
  return {ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranking.size()))};
}

inline double recall(const std::vector<std::string>& ranking, const std::set<std::string>& relevant, std::size_t k) {
  std::size_t found = 0;
  for (const auto& r : relevant) {
    const auto top = head(ranking, k);
    if (std::find(top.begin(), top.end(), r) != top.end()) ++found;
  }
  return static_cast<double>(found) / static_cast<double>(relevant.size());
}

inline double precision(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
                        std::size_t k) {
  std::size_t found = 0;
  for (const auto& id : head(ranking, k)) found += relevant.count(id);
  return static_cast<double>(found) / static_cast<double>(k);
}

inline double ndcg(const std::vector<std::string>& ranking, const std::map<std::string, double>& gain,
                   std::size_t k) {
  auto dcg = [&](const std::vector<double>& gains) {
    double total = 0.0;
    for (std::size_t i = 0; i < gains.size() && i < k; ++i) total += gains[i] / std::log2(static_cast<double>(i) + 2.0);
    return total;
  };
  std::vector<double> actual;
  for (const auto& id : head(ranking, k)) {
    const auto it = gain.find(id);
    actual.push_back(it == gain.end() ? 0.0 : it->second);
  }
  std::vector<double> ideal;
  for (const auto& [id, g] : gain) ideal.push_back(g);
  std::sort(ideal.rbegin(), ideal.rend());
  return dcg(actual) / dcg(ideal);
}

/// Tau-b as (P - Q) / sqrt((P + Q + X0)(P + Q + Y0)) where X0 / Y0 count
/// pairs tied only in x / only in y.
inline std::optional<double> tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  long long p = 0;
  long long q = 0;
  long long x0 = 0;
  long long y0 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (j <= i) continue;
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) {
        ++x0;
      } else if (dy == 0.0) {
        ++y0;
      } else if ((dx > 0) == (dy > 0)) {
        ++p;
      } else {
        ++q;
      }
    }
  }
  const double denom = std::sqrt(static_cast<double>(p + q + x0) * static_cast<double>(p + q + y0));
  if (denom == 0.0) return std::nullopt;
  return static_cast<double>(p - q) / denom;
}

/// Tau between retrieved position and judgment gain over the passages in both
/// top-k lists.
inline std::optional<double> tau(const std::vector<std::string>& ranking, const rageval::Judgment& judgment,
                                 std::size_t k) {
  const auto top = head(ranking, k);
  const auto judged = head(judgment.ranked, k);
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t i = 0; i < top.size(); ++i) {
    if (std::find(judged.begin(), judged.end(), top[i]) == judged.end()) continue;
    x.push_back(static_cast<double>(top.size() - i));
    y.push_back(judgment.gains.at(top[i]));
  }
  if (x.size() < 2) return std::nullopt;
  return tau_b(x, y);
}

}  // namespace oracle
}  // namespace testing
