#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rageval/judgment.hpp"
#include "rageval/util.hpp"

namespace rageval::metrics {

/// A metric value plus whether the instance was evaluable. Unevaluable values
/// are reported as 0 and must be kept out of averages.
struct MetricValue {
  double value = 0.0;
  bool evaluable = true;
};

enum class GainMode { kBinary, kGraded };

std::string_view to_string(GainMode mode);
GainMode gain_mode_from_string(std::string_view name);

/// |top-k ∩ relevant| / |relevant|; unevaluable when the relevant set is empty.
MetricValue recall_at_k(std::span<const std::string> retrieved, const Judgment& judgment, std::size_t k);

/// |top-k ∩ relevant| / k. Missing slots in a short list count as misses.
MetricValue precision_at_k(std::span<const std::string> retrieved, const Judgment& judgment,
                           std::size_t k);

/// DCG over the retrieved top-k with gains 1/0 (binary) or the judgment's
/// probabilities (graded), divided by the DCG of the judgment's ideal order.
MetricValue ndcg_at_k(std::span<const std::string> retrieved, const Judgment& judgment, std::size_t k,
                      GainMode mode);

/// Kendall tau-b between the retrieved order and the judgment's gains,
/// restricted to passages present in both top-k lists.
MetricValue kendall_tau(std::span<const std::string> retrieved, const Judgment& judgment, std::size_t k);

/// Tau-b between two rankings restricted to their shared top-k members.
MetricValue kendall_tau(std::span<const std::string> a, std::span<const std::string> b, std::size_t k);

/// Tau-b of paired observations: (concordant - discordant) /
/// sqrt((n0 - ties_x)(n0 - ties_y)). Unevaluable for fewer than two pairs or
/// when either side is constant.
MetricValue kendall_tau_b(std::span<const double> x, std::span<const double> y);

struct RetrievalEval {
  std::string corpus_id;
  std::string query_id;
  std::string retriever_id;
  std::string judgment_backend;
  std::size_t k = 0;
  std::optional<double> recall;
  std::optional<double> precision;
  std::optional<double> ndcg;
  std::optional<double> kendall_tau;
  bool evaluable = true;  // judgment has a non-empty relevant set
};

RetrievalEval evaluate(std::string_view corpus_id, std::string_view retriever_id,
                       std::span<const std::string> retrieved, const Judgment& judgment, std::size_t k,
                       GainMode mode);

inline constexpr std::string_view kMetricNames[] = {"recall", "precision", "ndcg", "kendall_tau"};
std::optional<double> metric_of(const RetrievalEval& eval, std::string_view metric);

struct AggregateRow {
  std::string corpus_id;
  std::string retriever_id;
  std::size_t k = 0;
  std::string metric;
  std::optional<double> mean;  // absent when no backend had an evaluable query
  std::size_t backends = 0;    // backends contributing to the mean
  std::size_t evaluated = 0;   // (backend, query) pairs in the denominators
  std::size_t unevaluable = 0;
};

struct AggregateReport {
  std::vector<AggregateRow> rows;  // sorted by (corpus, retriever, metric, k)
  std::size_t empty_groups = 0;
};

/// Two-stage mean per (corpus, retriever, k, metric): average over evaluable
/// queries within each judgment backend, then over backends.
AggregateReport aggregate(std::span<const RetrievalEval> evals);

Json to_json(const RetrievalEval& eval);
RetrievalEval retrieval_eval_from_json(const Json& record);
Json to_json(const AggregateRow& row);

// ---------------------------------------------------------------------------
// Binary classification (relevant context = positive class).

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  void add(bool label, bool predicted);
};

struct LabelMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::size_t support = 0;
};

struct ClassifierMetrics {
  ConfusionCounts counts;
  LabelMetrics irrelevant;
  LabelMetrics relevant;
  LabelMetrics macro;  // unweighted mean over both labels; absent if either is
  std::optional<double> accuracy;
};

/// Per-label precision/recall/F1 (0/0 reported as not-applicable), their
/// macro average and accuracy.
ClassifierMetrics classifier_metrics(const ConfusionCounts& counts);

Json to_json(const ClassifierMetrics& metrics);

}  // namespace rageval::metrics
