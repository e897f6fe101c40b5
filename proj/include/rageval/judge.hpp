#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rageval/backend.hpp"
#include "rageval/corpus.hpp"
#include "rageval/query.hpp"
#include "rageval/util.hpp"

namespace rageval::judge {

// ---------------------------------------------------------------------------
// Prompts and parsing

/// Context relevance rubric; {question} and {doc} are substituted verbatim.
std::string relevance_prompt(std::string_view question, std::string_view passage);
inline constexpr std::string_view kRetryReminder = "\n\nRespond with a single number.";

inline constexpr std::string_view kAnswerTemplatesVersion = "answer-templates-v1";
/// sha256 over every answer-side template, recorded with each run.
std::string answer_templates_sha256();

/// Generation prompt; without a context the passage section is left out.
std::string answer_prompt(std::string_view question, std::span<const std::string> context);
std::string faithfulness_prompt(std::string_view question, std::string_view answer,
                                std::span<const std::string> context);
std::string answer_relevance_prompt(std::string_view question, std::string_view answer);
std::string noise_robustness_prompt(std::string_view question, std::string_view answer,
                                    std::span<const std::string> context);
std::string accuracy_prompt(std::string_view question, std::string_view answer, std::string_view gold_answer);

/// First standalone digit within [lo, hi]: not adjacent to a letter or digit
/// and not part of a decimal number.
std::optional<int> parse_score(std::string_view response, int lo, int hi);
/// First standalone "yes" or "no", case-insensitive.
std::optional<bool> parse_yes_no(std::string_view response);

// ---------------------------------------------------------------------------
// Context relevance (0-3)

enum class Source { kRetriever, kReranked };
std::string_view to_string(Source source);
Source source_from_string(std::string_view name);

struct RelevanceLabel {
  std::string query_id;
  std::string passage_id;
  Source source = Source::kRetriever;
  std::string judge_backend_id;
  std::string corpus_id;
  std::size_t chunk_budget = 0;
  std::size_t rank = 0;       // 1-based position in the source ranking
  std::optional<int> score;   // absent when the judge never produced a digit
  std::string raw_response;
};

/// Asks the judge once, and once more with a reminder if no score parses.
RelevanceLabel judge_context_relevance(const Query& query, const corpus::Passage& passage,
                                       backend::BackendClient& judge);

struct FrequencyRow {
  std::size_t chunk_budget = 0;
  std::size_t k = 0;
  Source source = Source::kRetriever;
  std::array<std::size_t, 4> counts{};
  std::size_t judged = 0;
  std::array<double, 4> percent{};
};

struct FrequencyTable {
  std::vector<std::size_t> panels;  // chunk budgets, descending
  std::vector<std::size_t> top_k;
  std::vector<FrequencyRow> rows;   // panel, k, then Retriever before Reranked
  std::size_t omitted_rows = 0;     // cells with no judged label
  std::size_t unparseable = 0;      // labels without a score
};

/// Share of scores 0..3 among labels at rank <= k, per (budget, k, source).
/// Panels default to the budgets present in the labels.
FrequencyTable relevance_frequency_table(std::span<const RelevanceLabel> labels,
                                         std::span<const std::size_t> top_k_grid,
                                         std::span<const std::size_t> panels = {});

// ---------------------------------------------------------------------------
// Answer evaluation

struct NoisyContextItem {
  std::string query_id;
  std::string gold_passage_id;
  std::string gold_doc_id;
  std::vector<std::string> distractor_ids;
  std::vector<std::string> context_ids;  // gold inserted at gold_position
  std::size_t gold_position = 0;
};

/// The gold passage for a QA item: the corpus passage named by
/// gold_passage_id, else the corpus passage with identical normalized text,
/// else a passage outside the corpus (doc_id from gold_doc_id when given).
corpus::Passage resolve_gold(const Query& query, const corpus::PassageTable& passages);

/// Samples n_distractors passages from other documents and places the gold
/// at a seeded random position.
NoisyContextItem build_noisy_context(const Query& query, const corpus::Passage& gold,
                                     const corpus::PassageTable& passages, std::size_t n_distractors,
                                     std::uint64_t seed);

std::string generate_answer(const Query& query, std::span<const std::string> context,
                            backend::BackendClient& generator, const backend::GenerationSettings& settings);

struct JudgeScores {
  std::optional<int> faithfulness;
  std::optional<int> relevance;
  std::optional<int> noise_robustness;
  std::optional<bool> accuracy;
};

struct AnswerEval {
  std::string query_id;
  std::string generator_backend_id;
  bool with_context = true;
  std::string answer;
  std::optional<double> faithfulness;
  std::optional<double> relevance;
  std::optional<double> noise_robustness;
  std::optional<bool> accuracy;
  std::map<std::string, JudgeScores> judge_raw;
  std::size_t unparseable = 0;  // (judge, metric) pairs that never parsed
};

struct AnswerJudging {
  bool quality = true;  // faithfulness and answer relevance
  bool noise = true;    // noise robustness
};

/// Scores an answer with every judge. Quality metrics are the mean over
/// judges that produced a score; accuracy is a majority vote with ties false.
AnswerEval judge_answer(const Query& query, std::string_view answer, std::span<const std::string> context,
                        std::string_view gold_answer, std::span<backend::BackendClient* const> judges,
                        AnswerJudging what = {});

struct Summary {
  std::optional<double> mean;
  std::optional<double> sd;  // population standard deviation
  std::size_t n = 0;
};

Summary summarize(std::span<const double> values);

struct Ratio {
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct AnswerReport {
  Summary faithfulness;
  Summary relevance;
  Summary noise_robustness;
  bool noise_applicable = true;
  Ratio accuracy;
  Ratio accuracy_without_context;
  std::size_t items = 0;
  std::size_t skipped_with_context = 0;
  std::size_t skipped_without_context = 0;
};

AnswerReport answer_report(std::span<const AnswerEval> with_context, std::span<const AnswerEval> without_context,
                           std::size_t items, bool noise_applicable);

Json to_json(const RelevanceLabel& label);
RelevanceLabel relevance_label_from_json(const Json& record);
Json to_json(const FrequencyTable& table);
Json to_json(const NoisyContextItem& item);
Json to_json(const AnswerEval& eval);
AnswerEval answer_eval_from_json(const Json& record);
Json to_json(const AnswerReport& report);

}  // namespace rageval::judge
