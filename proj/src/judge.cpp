#include "rageval/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "rageval/error.hpp"
#include "rageval/text.hpp"

namespace rageval::judge {
namespace {

constexpr std::string_view kRelevanceTemplate =
    "You are an AI assistant that judges the relevance of a document to a given question. "
    "Respond with a score from 0 to 3.\n\n"
    "QUESTION: {question}\n\n"
    "DOCUMENT: {doc}\n\n"
    "Rate how relevant the document is to answering the question using the following scale:\n\n"
    "0 = Completely irrelevant\n\n"
    "1 = Slightly irrelevant\n\n"
    "2 = Slightly relevant\n\n"
    "3 = Completely relevant\n\n"
    "Respond with a single number between 0 and 3.";

constexpr std::string_view kAnswerWithContextTemplate =
    "You are an assistant that answers questions using the passages provided as context. "
    "Use only information from the context. If the context does not contain the answer, say that you do "
    "not know.\n\n"
    "CONTEXT:\n{context}\n\n"
    "QUESTION: {question}\n\n"
    "ANSWER:";

constexpr std::string_view kAnswerWithoutContextTemplate =
    "You are an assistant that answers questions. Answer concisely. If you do not know the answer, say "
    "so.\n\n"
    "QUESTION: {question}\n\n"
    "ANSWER:";

constexpr std::string_view kFaithfulnessTemplate =
    "You are an AI assistant that evaluates answers written from retrieved passages. Rate how faithful the "
    "answer is to the context: every claim in the answer should be supported by the context.\n\n"
    "CONTEXT:\n{context}\n\n"
    "QUESTION: {question}\n\n"
    "ANSWER: {answer}\n\n"
    "Use the following scale:\n\n"
    "1 = The answer contradicts the context or is unsupported by it\n\n"
    "2 = Most claims are unsupported by the context\n\n"
    "3 = Some claims are supported and some are not\n\n"
    "4 = Nearly all claims are supported by the context\n\n"
    "5 = Every claim is supported by the context\n\n"
    "Respond with a single number between 1 and 5.";

constexpr std::string_view kAnswerRelevanceTemplate =
    "You are an AI assistant that evaluates answers to questions. Rate how well the answer addresses the "
    "question that was asked.\n\n"
    "QUESTION: {question}\n\n"
    "ANSWER: {answer}\n\n"
    "Use the following scale:\n\n"
    "1 = The answer does not address the question\n\n"
    "2 = The answer touches the topic but misses the question\n\n"
    "3 = The answer partly addresses the question\n\n"
    "4 = The answer addresses the question with minor omissions or extra material\n\n"
    "5 = The answer addresses the question directly and completely\n\n"
    "Respond with a single number between 1 and 5.";

constexpr std::string_view kNoiseRobustnessTemplate =
    "You are an AI assistant that evaluates answers written from retrieved passages. Only some of the "
    "passages in the context are relevant to the question; the others are noise. Rate how well the answer "
    "ignores the irrelevant passages.\n\n"
    "CONTEXT:\n{context}\n\n"
    "QUESTION: {question}\n\n"
    "ANSWER: {answer}\n\n"
    "Use the following scale:\n\n"
    "1 = The answer is built mainly on irrelevant passages\n\n"
    "2 = The answer mixes in a lot of irrelevant material\n\n"
    "3 = The answer contains some irrelevant material\n\n"
    "4 = The answer contains a trace of irrelevant material\n\n"
    "5 = The answer uses no irrelevant material\n\n"
    "Respond with a single number between 1 and 5.";

constexpr std::string_view kAccuracyTemplate =
    "You are an AI assistant that checks answers against a reference answer. Decide whether the answer "
    "states the same fact as the reference answer. Wording may differ.\n\n"
    "QUESTION: {question}\n\n"
    "REFERENCE ANSWER: {gold}\n\n"
    "ANSWER: {answer}\n\n"
    "Does the answer match the reference answer? Respond with yes or no.";

constexpr std::string_view kYesNoReminder = "\n\nRespond with yes or no.";

// Single pass, so substituted values are never rescanned for placeholders.
std::string render(std::string_view tmpl, const std::map<std::string_view, std::string_view>& values) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const auto it = values.find(tmpl.substr(i + 1, close - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::string context_block(std::span<const std::string> context) {
  std::string block;
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (i > 0) block += '\n';
    block += fmt::format("[{}] {}", i + 1, context[i]);
  }
  return block;
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(' ');
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(' ');
  return std::string(s.substr(first, last - first + 1));
}

std::optional<double> mean_of(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }
Json optional_json(const std::optional<int>& v) { return v ? Json(*v) : Json(nullptr); }
Json optional_json(const std::optional<bool>& v) { return v ? Json(*v) : Json(nullptr); }

template <typename T>
std::optional<T> optional_from(const Json& record, const char* key) {
  if (!record.contains(key) || record.at(key).is_null()) return std::nullopt;
  return record.at(key).get<T>();
}

Json summary_json(const Summary& s) {
  Json j;
  j["mean"] = optional_json(s.mean);
  j["sd"] = optional_json(s.sd);
  j["n"] = s.n;
  return j;
}

struct Asked {
  std::optional<int> score;
  std::optional<bool> verdict;
  std::string raw;
};

Asked ask_score(backend::BackendClient& judge, const std::string& prompt, int lo, int hi) {
  Asked a;
  a.raw = judge.generate(prompt);
  a.score = parse_score(a.raw, lo, hi);
  if (!a.score) {
    a.raw = judge.generate(prompt + std::string(kRetryReminder));
    a.score = parse_score(a.raw, lo, hi);
  }
  return a;
}

Asked ask_yes_no(backend::BackendClient& judge, const std::string& prompt) {
  Asked a;
  a.raw = judge.generate(prompt);
  a.verdict = parse_yes_no(a.raw);
  if (!a.verdict) {
    a.raw = judge.generate(prompt + std::string(kYesNoReminder));
    a.verdict = parse_yes_no(a.raw);
  }
  return a;
}

}  // namespace

std::string relevance_prompt(std::string_view question, std::string_view passage) {
  return render(kRelevanceTemplate, {{"question", question}, {"doc", passage}});
}

std::string answer_templates_sha256() {
  std::string all;
  for (const auto t : {kAnswerWithContextTemplate, kAnswerWithoutContextTemplate, kFaithfulnessTemplate,
                       kAnswerRelevanceTemplate, kNoiseRobustnessTemplate, kAccuracyTemplate, kYesNoReminder,
                       kRetryReminder}) {
    all += t;
    all += '\x1e';
  }
  return sha256_hex(all);
}

std::string answer_prompt(std::string_view question, std::span<const std::string> context) {
  if (context.empty()) return render(kAnswerWithoutContextTemplate, {{"question", question}});
  const auto block = context_block(context);
  return render(kAnswerWithContextTemplate, {{"question", question}, {"context", block}});
}

std::string faithfulness_prompt(std::string_view question, std::string_view answer,
                                std::span<const std::string> context) {
  const auto block = context_block(context);
  return render(kFaithfulnessTemplate, {{"question", question}, {"answer", answer}, {"context", block}});
}

std::string answer_relevance_prompt(std::string_view question, std::string_view answer) {
  return render(kAnswerRelevanceTemplate, {{"question", question}, {"answer", answer}});
}

std::string noise_robustness_prompt(std::string_view question, std::string_view answer,
                                    std::span<const std::string> context) {
  const auto block = context_block(context);
  return render(kNoiseRobustnessTemplate, {{"question", question}, {"answer", answer}, {"context", block}});
}

std::string accuracy_prompt(std::string_view question, std::string_view answer, std::string_view gold_answer) {
  return render(kAccuracyTemplate, {{"question", question}, {"answer", answer}, {"gold", gold_answer}});
}

std::optional<int> parse_score(std::string_view response, int lo, int hi) {
  const std::size_t n = response.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_digit(response[i])) continue;
    const bool left_ok = i == 0 || (!is_alnum(response[i - 1]) &&
                                    !(response[i - 1] == '.' && i >= 2 && is_digit(response[i - 2])));
    const bool right_ok = i + 1 == n || (!is_alnum(response[i + 1]) &&
                                         !(response[i + 1] == '.' && i + 2 < n && is_digit(response[i + 2])));
    if (!left_ok || !right_ok) continue;
    const int value = response[i] - '0';
    if (value >= lo && value <= hi) return value;
  }
  return std::nullopt;
}

std::optional<bool> parse_yes_no(std::string_view response) {
  std::size_t i = 0;
  while (i < response.size()) {
    if (!is_alpha(response[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::string word;
    while (j < response.size() && is_alpha(response[j])) {
      word += static_cast<char>(std::tolower(static_cast<unsigned char>(response[j])));
      ++j;
    }
    if (word == "yes") return true;
    if (word == "no") return false;
    i = j;
  }
  return std::nullopt;
}

std::string_view to_string(Source source) { return source == Source::kRetriever ? "retriever" : "reranked"; }

Source source_from_string(std::string_view name) {
  if (name == "retriever") return Source::kRetriever;
  if (name == "reranked") return Source::kReranked;
  fail(ErrorCode::kCorruption, fmt::format("unknown label source '{}'", name));
}

RelevanceLabel judge_context_relevance(const Query& query, const corpus::Passage& passage,
                                       backend::BackendClient& judge) {
  RelevanceLabel label;
  label.query_id = query.query_id;
  label.passage_id = passage.passage_id;
  label.judge_backend_id = judge.id();
  label.chunk_budget = passage.chunk_budget;
  const auto asked = ask_score(judge, relevance_prompt(query.text, passage.text), 0, 3);
  label.score = asked.score;
  label.raw_response = asked.raw;
  return label;
}

FrequencyTable relevance_frequency_table(std::span<const RelevanceLabel> labels,
                                         std::span<const std::size_t> top_k_grid,
                                         std::span<const std::size_t> panels) {
  FrequencyTable table;
  table.top_k.assign(top_k_grid.begin(), top_k_grid.end());
  if (panels.empty()) {
    for (const auto& l : labels) table.panels.push_back(l.chunk_budget);
  } else {
    table.panels.assign(panels.begin(), panels.end());
  }
  std::sort(table.panels.begin(), table.panels.end(), std::greater<>());
  table.panels.erase(std::unique(table.panels.begin(), table.panels.end()), table.panels.end());

  for (const auto& l : labels) {
    if (!l.score) ++table.unparseable;
  }
  for (const auto panel : table.panels) {
    for (const auto k : table.top_k) {
      for (const auto source : {Source::kRetriever, Source::kReranked}) {
        FrequencyRow row;
        row.chunk_budget = panel;
        row.k = k;
        row.source = source;
        for (const auto& l : labels) {
          if (l.chunk_budget != panel || l.source != source || l.rank < 1 || l.rank > k || !l.score) continue;
          ++row.counts[static_cast<std::size_t>(*l.score)];
          ++row.judged;
        }
        if (row.judged == 0) {
          ++table.omitted_rows;
          continue;
        }
        for (std::size_t s = 0; s < 4; ++s) {
          row.percent[s] = 100.0 * static_cast<double>(row.counts[s]) / static_cast<double>(row.judged);
        }
        table.rows.push_back(row);
      }
    }
  }
  return table;
}

corpus::Passage resolve_gold(const Query& query, const corpus::PassageTable& passages) {
  if (query.gold_passage_id) {
    if (const auto* p = passages.find(*query.gold_passage_id)) return *p;
  }
  require(query.gold_passage.has_value() || query.gold_passage_id.has_value(),
          fmt::format("query '{}' has no gold passage", query.query_id));
  if (query.gold_passage) {
    const auto wanted = trim(text::normalize(*query.gold_passage).text);
    for (const auto& p : passages.all()) {
      if (trim(p.text) == wanted) return p;
    }
    corpus::Passage external;
    external.passage_id = query.gold_passage_id.value_or(query.query_id + "#gold");
    external.doc_id = query.gold_doc_id.value_or("external:" + query.query_id);
    external.text = wanted;
    external.token_count = text::count_tokens(wanted);
    return external;
  }
  fail(ErrorCode::kNotFound,
       fmt::format("query '{}': gold passage '{}' is not in the corpus", query.query_id, *query.gold_passage_id));
}

NoisyContextItem build_noisy_context(const Query& query, const corpus::Passage& gold,
                                     const corpus::PassageTable& passages, std::size_t n_distractors,
                                     std::uint64_t seed) {
  std::vector<const corpus::Passage*> eligible;
  for (const auto& p : passages.all()) {
    if (p.doc_id != gold.doc_id) eligible.push_back(&p);
  }
  if (eligible.size() < n_distractors) {
    fail(ErrorCode::kPrecondition,
         fmt::format("query '{}': {} passages outside document '{}', need {}", query.query_id, eligible.size(),
                     gold.doc_id, n_distractors));
  }
  NoisyContextItem item;
  item.query_id = query.query_id;
  item.gold_passage_id = gold.passage_id;
  item.gold_doc_id = gold.doc_id;
  Rng rng(seed);
  for (const auto i : rng.sample_indices(eligible.size(), n_distractors)) {
    item.distractor_ids.push_back(eligible[i]->passage_id);
  }
  item.gold_position = static_cast<std::size_t>(rng.below(n_distractors + 1));
  item.context_ids = item.distractor_ids;
  item.context_ids.insert(item.context_ids.begin() + static_cast<std::ptrdiff_t>(item.gold_position),
                          gold.passage_id);
  return item;
}

std::string generate_answer(const Query& query, std::span<const std::string> context,
                            backend::BackendClient& generator, const backend::GenerationSettings& settings) {
  return generator.generate(answer_prompt(query.text, context), settings);
}

AnswerEval judge_answer(const Query& query, std::string_view answer, std::span<const std::string> context,
                        std::string_view gold_answer, std::span<backend::BackendClient* const> judges,
                        AnswerJudging what) {
  require(!judges.empty(), "answer judging needs at least one judge");
  AnswerEval eval;
  eval.query_id = query.query_id;
  eval.with_context = !context.empty();
  eval.answer = std::string(answer);
  const bool faithfulness = what.quality && !context.empty();
  const bool noise = what.noise && !context.empty();

  std::vector<double> faith_scores;
  std::vector<double> relevance_scores;
  std::vector<double> noise_scores;
  std::size_t yes = 0;
  std::size_t no = 0;
  auto keep = [&](const Asked& a, std::vector<double>& into) {
    if (a.score) {
      into.push_back(*a.score);
    } else {
      ++eval.unparseable;
    }
    return a.score;
  };

  for (auto* judge : judges) {
    JudgeScores raw;
    if (faithfulness) {
      raw.faithfulness = keep(ask_score(*judge, faithfulness_prompt(query.text, answer, context), 1, 5), faith_scores);
    }
    if (what.quality) {
      raw.relevance = keep(ask_score(*judge, answer_relevance_prompt(query.text, answer), 1, 5), relevance_scores);
    }
    if (noise) {
      raw.noise_robustness =
          keep(ask_score(*judge, noise_robustness_prompt(query.text, answer, context), 1, 5), noise_scores);
    }
    if (!gold_answer.empty()) {
      const auto asked = ask_yes_no(*judge, accuracy_prompt(query.text, answer, gold_answer));
      raw.accuracy = asked.verdict;
      if (!asked.verdict) {
        ++eval.unparseable;
      } else {
        ++(*asked.verdict ? yes : no);
      }
    }
    eval.judge_raw[judge->id()] = raw;
  }
  eval.faithfulness = mean_of(faith_scores);
  eval.relevance = mean_of(relevance_scores);
  eval.noise_robustness = mean_of(noise_scores);
  if (yes + no > 0) eval.accuracy = yes > no;
  return eval;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  const double mean = total / static_cast<double>(values.size());
  double squares = 0.0;
  for (double v : values) squares += (v - mean) * (v - mean);
  s.mean = mean;
  s.sd = std::sqrt(squares / static_cast<double>(values.size()));
  return s;
}

AnswerReport answer_report(std::span<const AnswerEval> with_context, std::span<const AnswerEval> without_context,
                           std::size_t items, bool noise_applicable) {
  AnswerReport report;
  report.items = items;
  report.noise_applicable = noise_applicable;
  std::vector<double> faith;
  std::vector<double> relevance;
  std::vector<double> noise;
  for (const auto& e : with_context) {
    if (e.faithfulness) faith.push_back(*e.faithfulness);
    if (e.relevance) relevance.push_back(*e.relevance);
    if (e.noise_robustness) noise.push_back(*e.noise_robustness);
    if (e.accuracy) {
      ++report.accuracy.total;
      if (*e.accuracy) ++report.accuracy.correct;
    }
  }
  for (const auto& e : without_context) {
    if (e.accuracy) {
      ++report.accuracy_without_context.total;
      if (*e.accuracy) ++report.accuracy_without_context.correct;
    }
  }
  report.faithfulness = summarize(faith);
  report.relevance = summarize(relevance);
  if (noise_applicable) report.noise_robustness = summarize(noise);
  report.skipped_with_context = items - std::min(items, with_context.size());
  report.skipped_without_context = items - std::min(items, without_context.size());
  return report;
}

Json to_json(const RelevanceLabel& label) {
  Json j;
  j["query_id"] = label.query_id;
  j["passage_id"] = label.passage_id;
  j["source"] = to_string(label.source);
  j["judge_backend_id"] = label.judge_backend_id;
  j["corpus_id"] = label.corpus_id;
  j["chunk_budget"] = label.chunk_budget;
  j["rank"] = label.rank;
  j["score"] = optional_json(label.score);
  j["raw_response"] = label.raw_response;
  return j;
}

RelevanceLabel relevance_label_from_json(const Json& record) {
  try {
    RelevanceLabel l;
    l.query_id = record.at("query_id").get<std::string>();
    l.passage_id = record.at("passage_id").get<std::string>();
    l.source = source_from_string(record.at("source").get<std::string>());
    l.judge_backend_id = record.at("judge_backend_id").get<std::string>();
    l.corpus_id = record.value("corpus_id", std::string{});
    l.chunk_budget = record.at("chunk_budget").get<std::size_t>();
    l.rank = record.at("rank").get<std::size_t>();
    l.score = optional_from<int>(record, "score");
    l.raw_response = record.value("raw_response", std::string{});
    if (l.score && (*l.score < 0 || *l.score > 3)) {
      fail(ErrorCode::kCorruption, fmt::format("relevance score {} outside 0..3", *l.score));
    }
    return l;
  } catch (const Json::exception& e) {
    fail(ErrorCode::kCorruption, fmt::format("malformed relevance label: {}", e.what()));
  }
}

Json to_json(const FrequencyTable& table) {
  Json j;
  j["panels"] = table.panels;
  j["top_k"] = table.top_k;
  Json rows = Json::array();
  for (const auto& r : table.rows) {
    Json row;
    row["chunk_budget"] = r.chunk_budget;
    row["k"] = r.k;
    row["source"] = to_string(r.source);
    row["counts"] = r.counts;
    row["judged"] = r.judged;
    row["percent"] = r.percent;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  j["omitted_rows"] = table.omitted_rows;
  j["unparseable"] = table.unparseable;
  return j;
}

Json to_json(const NoisyContextItem& item) {
  Json j;
  j["query_id"] = item.query_id;
  j["gold_passage_id"] = item.gold_passage_id;
  j["gold_doc_id"] = item.gold_doc_id;
  j["distractor_ids"] = item.distractor_ids;
  j["context_ids"] = item.context_ids;
  j["gold_position"] = item.gold_position;
  return j;
}

Json to_json(const AnswerEval& eval) {
  Json j;
  j["query_id"] = eval.query_id;
  j["generator_backend_id"] = eval.generator_backend_id;
  j["with_context"] = eval.with_context;
  j["answer"] = eval.answer;
  j["faithfulness"] = optional_json(eval.faithfulness);
  j["relevance"] = optional_json(eval.relevance);
  j["noise_robustness"] = optional_json(eval.noise_robustness);
  j["accuracy"] = optional_json(eval.accuracy);
  Json raw = Json::object();
  for (const auto& [judge, s] : eval.judge_raw) {
    raw[judge] = {{"faithfulness", optional_json(s.faithfulness)},
                  {"relevance", optional_json(s.relevance)},
                  {"noise_robustness", optional_json(s.noise_robustness)},
                  {"accuracy", optional_json(s.accuracy)}};
  }
  j["judge_raw"] = std::move(raw);
  j["unparseable"] = eval.unparseable;
  return j;
}

AnswerEval answer_eval_from_json(const Json& record) {
  try {
    AnswerEval e;
    e.query_id = record.at("query_id").get<std::string>();
    e.generator_backend_id = record.at("generator_backend_id").get<std::string>();
    e.with_context = record.at("with_context").get<bool>();
    e.answer = record.value("answer", std::string{});
    e.faithfulness = optional_from<double>(record, "faithfulness");
    e.relevance = optional_from<double>(record, "relevance");
    e.noise_robustness = optional_from<double>(record, "noise_robustness");
    e.accuracy = optional_from<bool>(record, "accuracy");
    for (const auto& [judge, s] : record.at("judge_raw").items()) {
      JudgeScores raw;
      raw.faithfulness = optional_from<int>(s, "faithfulness");
      raw.relevance = optional_from<int>(s, "relevance");
      raw.noise_robustness = optional_from<int>(s, "noise_robustness");
      raw.accuracy = optional_from<bool>(s, "accuracy");
      e.judge_raw[judge] = raw;
    }
    e.unparseable = record.value("unparseable", std::size_t{0});
    return e;
  } catch (const Json::exception& ex) {
    fail(ErrorCode::kCorruption, fmt::format("malformed answer eval: {}", ex.what()));
  }
}

Json to_json(const AnswerReport& report) {
  Json j;
  j["items"] = report.items;
  j["faithfulness"] = summary_json(report.faithfulness);
  j["relevance"] = summary_json(report.relevance);
  j["noise_robustness"] = report.noise_applicable ? summary_json(report.noise_robustness) : Json(nullptr);
  j["accuracy"] = {{"correct", report.accuracy.correct}, {"total", report.accuracy.total}};
  j["accuracy_without_context"] = {{"correct", report.accuracy_without_context.correct},
                                   {"total", report.accuracy_without_context.total}};
  j["skipped_with_context"] = report.skipped_with_context;
  j["skipped_without_context"] = report.skipped_without_context;
  return j;
}

}  // namespace rageval::judge
