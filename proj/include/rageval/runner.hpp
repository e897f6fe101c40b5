#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rageval/backend.hpp"
#include "rageval/judge.hpp"
#include "rageval/lexical.hpp"
#include "rageval/metrics.hpp"
#include "rageval/mining.hpp"
#include "rageval/rerank.hpp"
#include "rageval/util.hpp"

namespace rageval::runner {

inline constexpr std::string_view kCodeVersion = "rageval 0.1.0";
inline constexpr std::string_view kBm25 = "bm25";

struct ExperimentConfig {
  std::filesystem::path base_dir;  // relative paths below resolve against it; not part of the run id

  std::string name = "experiment";
  std::string documents;
  std::string corpus_prefix = "corpus";
  std::vector<std::size_t> chunk_budgets{512, 2000};
  std::string tokenizer_id;
  std::string store_root = "store";
  std::string runs_root = "runs";
  std::string queries;
  std::string qa_dataset;

  std::vector<backend::BackendProfile> backends;
  std::vector<std::string> retrievers{std::string(kBm25)};
  std::vector<std::string> rerankers;
  std::vector<std::string> judges;
  std::string generator;

  lexical::Bm25Params bm25;
  std::size_t retrieval_depth = 50;
  std::size_t candidate_k = 100;
  std::map<std::size_t, std::size_t> candidate_k_per_budget;
  std::vector<std::size_t> metric_k{1, 3, 5, 10, 20, 50};
  metrics::GainMode gain_mode = metrics::GainMode::kGraded;

  double threshold = rerank::kDefaultThreshold;
  std::map<std::string, double> thresholds;

  std::string relevance_retriever = std::string(kBm25);
  std::string relevance_reranker;  // defaults to the first reranker
  std::string relevance_judge;     // defaults to the first judge
  std::vector<std::size_t> relevance_top_k{3, 5, 7, 10};

  std::size_t n_distractors = 4;
  std::size_t answer_chunk_budget = 0;  // 0: the largest configured budget
  backend::GenerationSettings generation;

  mining::MiningSettings mining;
  std::size_t mining_chunk_budget = 0;  // 0: the smallest configured budget
  std::string mining_scorer;            // defaults to the first reranker
  std::map<std::string, std::string> classifier_datasets;  // subset -> JSONL; empty: the mined dataset

  std::uint64_t seed = 13;
  std::size_t embed_batch_size = 32;
  std::size_t workers = 8;

  std::filesystem::path resolve(const std::string& path) const;
  std::string corpus_id(std::size_t chunk_budget) const;
  std::size_t candidate_k_for(std::size_t chunk_budget) const;
  const backend::BackendProfile& profile(std::string_view backend_id) const;
};

ExperimentConfig config_from_json(const Json& record, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical form with every default spelled out; this is what gets hashed.
Json to_json(const ExperimentConfig& config);
/// Backend references resolve, kinds match their roles, grids are sane.
void validate(const ExperimentConfig& config);
/// Content hash of the canonical config and the code version.
std::string compute_run_id(const ExperimentConfig& config);

struct Counters {
  std::size_t items_in = 0;
  std::size_t scored = 0;
  std::size_t skipped = 0;
  std::size_t unevaluable = 0;
  std::size_t unparseable = 0;

  bool conserved() const { return items_in == scored + skipped + unevaluable + unparseable; }
};

Json to_json(const Counters& counters);

struct StageRecord {
  std::string status;  // "completed" or "failed"
  std::string started;
  std::string finished;
  std::vector<std::string> artifacts;  // relative to the run directory or store root
  Counters counters;
  std::string error;
};

class Runner {
 public:
  explicit Runner(ExperimentConfig config, std::optional<std::string> run_id = std::nullopt);

  const std::string& run_id() const { return run_id_; }
  std::filesystem::path run_dir() const;
  std::filesystem::path reports_dir() const { return run_dir() / "reports"; }
  const ExperimentConfig& config() const { return config_; }

  void ingest();
  void index();
  void embed();
  void mine();
  void ground_truth();
  metrics::AggregateReport eval_retrieval();
  judge::FrequencyTable judge_relevance();
  judge::AnswerReport eval_answers();
  std::vector<rerank::ClassifierReport> eval_classifier();
  /// Re-renders every report whose artifacts exist.
  void report();

  /// ingest through eval-answers in order.
  void run_pipeline();

  const std::map<std::string, StageRecord>& stages() const { return stages_; }

 private:
  std::shared_ptr<backend::BackendClient> client(std::string_view backend_id);
  void run_stage(const std::string& name, const std::function<void(StageRecord&)>& body);
  void save_record() const;

  metrics::AggregateReport write_retrieval_report();
  judge::FrequencyTable write_relevance_report();
  judge::AnswerReport write_answer_report();
  std::vector<rerank::ClassifierReport> write_classifier_report();

  ExperimentConfig config_;
  std::string run_id_;
  backend::BackendRegistry registry_;
  std::map<std::string, StageRecord> stages_;
};

/// Loads runs/<run_id>/run.json if present.
std::optional<Json> load_run_record(const ExperimentConfig& config, std::string_view run_id);

}  // namespace rageval::runner
