#include "rageval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "rageval/error.hpp"

namespace rageval::metrics {
namespace {

std::span<const std::string> top(std::span<const std::string> ranking, std::size_t k) {
  return ranking.first(std::min(k, ranking.size()));
}

std::size_t hits_in_top_k(std::span<const std::string> retrieved, const Judgment& judgment,
                          std::size_t k) {
  std::set<std::string_view> seen;
  std::size_t hits = 0;
  for (const auto& id : top(retrieved, k)) {
    if (seen.insert(id).second && judgment.relevant_set.count(id) > 0) ++hits;
  }
  return hits;
}

double discount(std::size_t position) {  // 1-based
  return 1.0 / std::log2(static_cast<double>(position) + 1.0);
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

std::optional<double> as_optional(const MetricValue& m) {
  return m.evaluable ? std::optional<double>(m.value) : std::nullopt;
}

std::optional<double> safe_ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> harmonic(const std::optional<double>& p, const std::optional<double>& r) {
  if (!p || !r) return std::nullopt;
  if (*p + *r == 0.0) return 0.0;
  return 2.0 * *p * *r / (*p + *r);
}

std::optional<double> mean2(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return (*a + *b) / 2.0;
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& record, const char* key) {
  if (!record.contains(key) || record.at(key).is_null()) return std::nullopt;
  return record.at(key).get<double>();
}

}  // namespace

std::string_view to_string(GainMode mode) { return mode == GainMode::kBinary ? "binary" : "graded"; }

GainMode gain_mode_from_string(std::string_view name) {
  if (name == "binary") return GainMode::kBinary;
  if (name == "graded") return GainMode::kGraded;
  fail(ErrorCode::kConfig, fmt::format("unknown gain mode '{}'", name));
}

MetricValue recall_at_k(std::span<const std::string> retrieved, const Judgment& judgment, std::size_t k) {
  require(k >= 1, "recall_at_k requires k >= 1");
  if (judgment.relevant_set.empty()) return {0.0, false};
  return {static_cast<double>(hits_in_top_k(retrieved, judgment, k)) /
              static_cast<double>(judgment.relevant_set.size()),
          true};
}

MetricValue precision_at_k(std::span<const std::string> retrieved, const Judgment& judgment,
                           std::size_t k) {
  require(k >= 1, "precision_at_k requires k >= 1");
  if (judgment.relevant_set.empty()) return {0.0, false};
  return {static_cast<double>(hits_in_top_k(retrieved, judgment, k)) / static_cast<double>(k), true};
}

MetricValue ndcg_at_k(std::span<const std::string> retrieved, const Judgment& judgment, std::size_t k,
                      GainMode mode) {
  require(k >= 1, "ndcg_at_k requires k >= 1");
  auto gain_of = [&](const std::string& id) {
    if (mode == GainMode::kBinary) return judgment.relevant_set.count(id) > 0 ? 1.0 : 0.0;
    const auto it = judgment.gains.find(id);
    return it == judgment.gains.end() ? 0.0 : it->second;
  };

  double dcg = 0.0;
  std::set<std::string_view> seen;
  std::size_t position = 0;
  for (const auto& id : top(retrieved, k)) {
    ++position;
    if (seen.insert(id).second) dcg += gain_of(id) * discount(position);
  }

  std::vector<double> ideal;
  if (mode == GainMode::kBinary) {
    ideal.assign(judgment.relevant_set.size(), 1.0);
  } else {
    for (const auto& [id, gain] : judgment.gains) ideal.push_back(gain);
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
  }
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += ideal[i] * discount(i + 1);
  if (idcg <= 0.0) return {0.0, false};
  return {dcg / idcg, true};
}

MetricValue kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "kendall_tau_b needs paired observations");
  const std::size_t n = x.size();
  if (n < 2) return {0.0, false};
  long long concordant = 0;
  long long discordant = 0;
  long long ties_x = 0;
  long long ties_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int sx = sign(x[i] - x[j]);
      const int sy = sign(y[i] - y[j]);
      if (sx == 0) ++ties_x;
      if (sy == 0) ++ties_y;
      if (sx == 0 || sy == 0) continue;
      (sx == sy ? concordant : discordant) += 1;
    }
  }
  const long long n0 = static_cast<long long>(n * (n - 1) / 2);
  const double denominator = std::sqrt(static_cast<double>(n0 - ties_x) * static_cast<double>(n0 - ties_y));
  if (denominator == 0.0) return {0.0, false};
  return {static_cast<double>(concordant - discordant) / denominator, true};
}

MetricValue kendall_tau(std::span<const std::string> retrieved, const Judgment& judgment, std::size_t k) {
  require(k >= 1, "kendall_tau requires k >= 1");
  const auto judged = top(judgment.ranked, k);
  const std::set<std::string_view> judged_set(judged.begin(), judged.end());
  std::vector<double> x;
  std::vector<double> y;
  std::set<std::string_view> seen;
  std::size_t position = 0;
  for (const auto& id : top(retrieved, k)) {
    ++position;
    if (!judged_set.count(id) || !seen.insert(id).second) continue;
    const auto gain = judgment.gains.find(id);
    x.push_back(-static_cast<double>(position));
    y.push_back(gain == judgment.gains.end() ? 0.0 : gain->second);
  }
  return kendall_tau_b(x, y);
}

MetricValue kendall_tau(std::span<const std::string> a, std::span<const std::string> b, std::size_t k) {
  require(k >= 1, "kendall_tau requires k >= 1");
  std::map<std::string_view, std::size_t> position_in_b;
  std::size_t position = 0;
  for (const auto& id : top(b, k)) position_in_b.emplace(id, ++position);
  std::vector<double> x;
  std::vector<double> y;
  std::set<std::string_view> seen;
  position = 0;
  for (const auto& id : top(a, k)) {
    ++position;
    const auto it = position_in_b.find(id);
    if (it == position_in_b.end() || !seen.insert(id).second) continue;
    x.push_back(-static_cast<double>(position));
    y.push_back(-static_cast<double>(it->second));
  }
  return kendall_tau_b(x, y);
}

RetrievalEval evaluate(std::string_view corpus_id, std::string_view retriever_id,
                       std::span<const std::string> retrieved, const Judgment& judgment, std::size_t k,
                       GainMode mode) {
  RetrievalEval eval;
  eval.corpus_id = std::string(corpus_id);
  eval.query_id = judgment.query_id;
  eval.retriever_id = std::string(retriever_id);
  eval.judgment_backend = judgment.backend_id;
  eval.k = k;
  eval.evaluable = judgment.evaluable_for_recall();
  eval.recall = as_optional(recall_at_k(retrieved, judgment, k));
  eval.precision = as_optional(precision_at_k(retrieved, judgment, k));
  eval.ndcg = as_optional(ndcg_at_k(retrieved, judgment, k, mode));
  eval.kendall_tau = as_optional(kendall_tau(retrieved, judgment, k));
  return eval;
}

std::optional<double> metric_of(const RetrievalEval& eval, std::string_view metric) {
  if (metric == "recall") return eval.recall;
  if (metric == "precision") return eval.precision;
  if (metric == "ndcg") return eval.ndcg;
  if (metric == "kendall_tau") return eval.kendall_tau;
  fail(ErrorCode::kPrecondition, fmt::format("unknown metric '{}'", metric));
}

AggregateReport aggregate(std::span<const RetrievalEval> evals) {
  using GroupKey = std::tuple<std::string, std::string, std::string, std::size_t>;  // corpus, retriever, metric, k
  struct Sums {
    double total = 0.0;
    std::size_t count = 0;
  };
  struct Group {
    std::map<std::string, Sums> per_backend;  // every backend seen, even without values
    std::size_t unevaluable = 0;
  };

  std::vector<const RetrievalEval*> ordered;
  for (const auto& e : evals) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    return std::tie(a->judgment_backend, a->query_id) < std::tie(b->judgment_backend, b->query_id);
  });

  std::map<GroupKey, Group> groups;
  for (const auto* e : ordered) {
    for (const auto metric : kMetricNames) {
      auto& group = groups[{e->corpus_id, e->retriever_id, std::string(metric), e->k}];
      auto& sums = group.per_backend[e->judgment_backend];
      const auto value = metric_of(*e, metric);
      if (!value) {
        ++group.unevaluable;
        continue;
      }
      sums.total += *value;
      ++sums.count;
    }
  }

  AggregateReport report;
  for (const auto& [key, group] : groups) {
    AggregateRow row;
    std::tie(row.corpus_id, row.retriever_id, row.metric, row.k) = key;
    row.unevaluable = group.unevaluable;
    double backend_total = 0.0;
    for (const auto& [backend, sums] : group.per_backend) {
      if (sums.count == 0) continue;
      backend_total += sums.total / static_cast<double>(sums.count);
      ++row.backends;
      row.evaluated += sums.count;
    }
    if (row.backends > 0) {
      row.mean = backend_total / static_cast<double>(row.backends);
    } else {
      ++report.empty_groups;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

Json to_json(const RetrievalEval& eval) {
  Json j;
  j["corpus_id"] = eval.corpus_id;
  j["query_id"] = eval.query_id;
  j["retriever_id"] = eval.retriever_id;
  j["judgment_backend"] = eval.judgment_backend;
  j["k"] = eval.k;
  j["recall"] = optional_json(eval.recall);
  j["precision"] = optional_json(eval.precision);
  j["ndcg"] = optional_json(eval.ndcg);
  j["kendall_tau"] = optional_json(eval.kendall_tau);
  j["evaluable"] = eval.evaluable;
  return j;
}

RetrievalEval retrieval_eval_from_json(const Json& record) {
  try {
    RetrievalEval e;
    e.corpus_id = record.at("corpus_id").get<std::string>();
    e.query_id = record.at("query_id").get<std::string>();
    e.retriever_id = record.at("retriever_id").get<std::string>();
    e.judgment_backend = record.at("judgment_backend").get<std::string>();
    e.k = record.at("k").get<std::size_t>();
    e.recall = optional_from(record, "recall");
    e.precision = optional_from(record, "precision");
    e.ndcg = optional_from(record, "ndcg");
    e.kendall_tau = optional_from(record, "kendall_tau");
    e.evaluable = record.at("evaluable").get<bool>();
    return e;
  } catch (const Json::exception& ex) {
    fail(ErrorCode::kCorruption, fmt::format("malformed retrieval eval record: {}", ex.what()));
  }
}

Json to_json(const AggregateRow& row) {
  Json j;
  j["corpus_id"] = row.corpus_id;
  j["retriever_id"] = row.retriever_id;
  j["metric"] = row.metric;
  j["k"] = row.k;
  j["mean"] = optional_json(row.mean);
  j["backends"] = row.backends;
  j["evaluated"] = row.evaluated;
  j["unevaluable"] = row.unevaluable;
  return j;
}

void ConfusionCounts::add(bool label, bool predicted) {
  if (label && predicted) ++tp;
  if (!label && predicted) ++fp;
  if (label && !predicted) ++fn;
  if (!label && !predicted) ++tn;
}

ClassifierMetrics classifier_metrics(const ConfusionCounts& counts) {
  ClassifierMetrics m;
  m.counts = counts;
  m.relevant.support = counts.tp + counts.fn;
  m.irrelevant.support = counts.tn + counts.fp;

  m.relevant.precision = safe_ratio(counts.tp, counts.tp + counts.fp);
  m.relevant.recall = safe_ratio(counts.tp, counts.tp + counts.fn);
  m.relevant.f1 = harmonic(m.relevant.precision, m.relevant.recall);
  m.irrelevant.precision = safe_ratio(counts.tn, counts.tn + counts.fn);
  m.irrelevant.recall = safe_ratio(counts.tn, counts.tn + counts.fp);
  m.irrelevant.f1 = harmonic(m.irrelevant.precision, m.irrelevant.recall);
  m.macro.precision = mean2(m.irrelevant.precision, m.relevant.precision);
  m.macro.recall = mean2(m.irrelevant.recall, m.relevant.recall);
  m.macro.f1 = mean2(m.irrelevant.f1, m.relevant.f1);
  m.macro.support = counts.total();
  m.accuracy = safe_ratio(counts.tp + counts.tn, counts.total());
  return m;
}

Json to_json(const ClassifierMetrics& metrics) {
  auto label = [](const LabelMetrics& l) {
    Json j;
    j["precision"] = optional_json(l.precision);
    j["recall"] = optional_json(l.recall);
    j["f1"] = optional_json(l.f1);
    j["support"] = l.support;
    return j;
  };
  Json j;
  j["tp"] = metrics.counts.tp;
  j["fp"] = metrics.counts.fp;
  j["fn"] = metrics.counts.fn;
  j["tn"] = metrics.counts.tn;
  j["irrelevant_context"] = label(metrics.irrelevant);
  j["relevant_context"] = label(metrics.relevant);
  j["macro_avg"] = label(metrics.macro);
  j["accuracy"] = optional_json(metrics.accuracy);
  return j;
}

}  // namespace rageval::metrics
