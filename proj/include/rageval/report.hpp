#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rageval/judge.hpp"
#include "rageval/metrics.hpp"
#include "rageval/rerank.hpp"
#include "rageval/util.hpp"

namespace rageval::report {

/// ".9590" style: four decimals without the leading zero; "n/a" when absent.
std::string format_fraction(const std::optional<double>& value);

/// Fixed-width text table, one line per aggregate row.
std::string render_aggregate(const metrics::AggregateReport& report);
std::string aggregate_jsonl(const metrics::AggregateReport& report);
/// One CSV per metric: corpus_id,retriever_id,k,mean,backends,evaluated,unevaluable.
std::map<std::string, std::string> aggregate_csv(const metrics::AggregateReport& report);

/// Rows Top-k x {Retriever, Reranked}, one column block of scores 0..3 per
/// chunk-budget panel.
std::string render_frequency_table(const judge::FrequencyTable& table);

inline constexpr const char* kAnswerColumns[] = {"Answer faithfulness", "Answer relevance", "Noise robustness",
                                                 "Answer accuracy", "Answer accuracy w/o Context"};

/// "3.92 ± 0.62 [3.30;4.54]": mean, population sd, and mean ± sd clipped to
/// the 1-5 scale.
std::string format_summary(const judge::Summary& summary);
std::string render_answer_report(const judge::AnswerReport& report);

/// Blocks per subset with Irrelevant Context / Relevant Context / Macro Avg
/// rows and an Accuracy row; one precision/recall/F1 column group per backend.
std::string render_classifier(std::span<const rerank::ClassifierReport> reports);

}  // namespace rageval::report
