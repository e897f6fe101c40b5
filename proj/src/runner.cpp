#include "rageval/runner.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <set>

#include <fmt/format.h>

#include "rageval/corpus.hpp"
#include "rageval/dense.hpp"
#include "rageval/error.hpp"
#include "rageval/lexical.hpp"
#include "rageval/query.hpp"
#include "rageval/ranking.hpp"
#include "rageval/report.hpp"
#include "rageval/text.hpp"

namespace rageval::runner {
namespace fs = std::filesystem;
namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

template <typename T>
T get_or(const Json& record, const char* key, T fallback) {
  if (!record.contains(key) || record.at(key).is_null()) return fallback;
  return record.at(key).get<T>();
}

const Json& section(const Json& record, const char* key) {
  static const Json empty = Json::object();
  if (!record.contains(key)) return empty;
  if (!record.at(key).is_object()) fail(ErrorCode::kConfig, fmt::format("config section '{}' must be an object", key));
  return record.at(key);
}

bool is_dense(std::string_view retriever) { return retriever != kBm25; }

std::string ranking_file(const std::string& corpus_id, const std::string& retriever) {
  return fmt::format("rankings/{}/{}.jsonl", corpus_id, retriever);
}

std::map<std::string, std::vector<std::string>> read_rankings(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kNotFound, fmt::format("missing artifact {}", path.string()));
  std::map<std::string, std::vector<std::string>> rankings;
  for (const auto& record : read_jsonl(path)) {
    std::vector<std::string> ids;
    for (const auto& hit : record.at("hits")) ids.push_back(hit_from_json(hit).passage_id);
    rankings[record.at("query_id").get<std::string>()] = std::move(ids);
  }
  return rankings;
}

std::vector<Judgment> read_judgments(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kNotFound, fmt::format("missing artifact {}", path.string()));
  std::vector<Judgment> judgments;
  for (const auto& record : read_jsonl(path)) judgments.push_back(judgment_from_json(record));
  return judgments;
}

lexical::Bm25Index load_index_checked(const fs::path& store, const std::string& corpus_id,
                                      const lexical::Bm25Params& params) {
  auto index = lexical::load_index(store, corpus_id);
  if (index.params.k1 != params.k1 || index.params.b != params.b) {
    fail(ErrorCode::kPrecondition,
         fmt::format("index of {} was built with k1={} b={}, config asks for k1={} b={}; rerun 'index'", corpus_id,
                     index.params.k1, index.params.b, params.k1, params.b));
  }
  return index;
}

bool is_backend_failure(const Error& e) {
  return e.code() == ErrorCode::kTransport || e.code() == ErrorCode::kProtocol;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

fs::path ExperimentConfig::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

std::string ExperimentConfig::corpus_id(std::size_t chunk_budget) const {
  return fmt::format("{}-{}", corpus_prefix, chunk_budget);
}

std::size_t ExperimentConfig::candidate_k_for(std::size_t chunk_budget) const {
  const auto it = candidate_k_per_budget.find(chunk_budget);
  return it == candidate_k_per_budget.end() ? candidate_k : it->second;
}

const backend::BackendProfile& ExperimentConfig::profile(std::string_view backend_id) const {
  for (const auto& p : backends) {
    if (p.backend_id == backend_id) return p;
  }
  fail(ErrorCode::kConfig, fmt::format("unknown backend '{}'", backend_id));
}

ExperimentConfig config_from_json(const Json& record, const fs::path& base_dir) {
  if (!record.is_object()) fail(ErrorCode::kConfig, "config must be a JSON object");
  ExperimentConfig c;
  c.base_dir = base_dir;
  try {
    c.name = get_or(record, "name", c.name);
    c.documents = get_or(record, "documents", c.documents);
    c.corpus_prefix = get_or(record, "corpus_prefix", c.corpus_prefix);
    c.chunk_budgets = get_or(record, "chunk_budgets", c.chunk_budgets);
    c.tokenizer_id = get_or(record, "tokenizer_id", std::string(text::kTokenizerId));
    c.store_root = get_or(record, "store_root", c.store_root);
    c.runs_root = get_or(record, "runs_root", c.runs_root);
    c.queries = get_or(record, "queries", c.queries);
    c.qa_dataset = get_or(record, "qa_dataset", c.qa_dataset);
    if (record.contains("backends")) {
      for (const auto& b : record.at("backends")) c.backends.push_back(backend::profile_from_json(b));
    }
    c.retrievers = get_or(record, "retrievers", c.retrievers);
    c.rerankers = get_or(record, "rerankers", c.rerankers);
    c.judges = get_or(record, "judges", c.judges);
    c.generator = get_or(record, "generator", c.generator);

    const auto& retrieval = section(record, "retrieval");
    c.bm25.k1 = get_or(retrieval, "k1", c.bm25.k1);
    c.bm25.b = get_or(retrieval, "b", c.bm25.b);
    c.retrieval_depth = get_or(retrieval, "depth", c.retrieval_depth);
    c.candidate_k = get_or(retrieval, "candidate_k", c.candidate_k);
    if (retrieval.contains("candidate_k_per_budget")) {
      for (const auto& [budget, k] : retrieval.at("candidate_k_per_budget").items()) {
        c.candidate_k_per_budget[std::stoul(budget)] = k.get<std::size_t>();
      }
    }
    c.metric_k = get_or(retrieval, "metric_k", c.metric_k);
    c.gain_mode = metrics::gain_mode_from_string(get_or(retrieval, "gain_mode", std::string("graded")));

    const auto& thresholds = section(record, "thresholds");
    c.threshold = get_or(thresholds, "default", c.threshold);
    c.thresholds = get_or(thresholds, "per_backend", c.thresholds);

    const auto& relevance = section(record, "relevance");
    c.relevance_retriever = get_or(relevance, "retriever", c.relevance_retriever);
    c.relevance_reranker = get_or(relevance, "reranker", c.relevance_reranker);
    c.relevance_judge = get_or(relevance, "judge", c.relevance_judge);
    c.relevance_top_k = get_or(relevance, "top_k", c.relevance_top_k);

    const auto& answers = section(record, "answers");
    c.n_distractors = get_or(answers, "n_distractors", c.n_distractors);
    c.answer_chunk_budget = get_or(answers, "chunk_budget", c.answer_chunk_budget);
    c.generation.temperature = get_or(answers, "temperature", c.generation.temperature);
    c.generation.max_tokens = get_or(answers, "max_tokens", c.generation.max_tokens);

    const auto& mining = section(record, "mining");
    c.mining.random_negatives = get_or(mining, "random_negatives", c.mining.random_negatives);
    c.mining.indoc_negatives = get_or(mining, "indoc_negatives", c.mining.indoc_negatives);
    c.mining.pool_size = get_or(mining, "pool_size", c.mining.pool_size);
    c.mining_chunk_budget = get_or(mining, "chunk_budget", c.mining_chunk_budget);
    c.mining_scorer = get_or(mining, "scorer", c.mining_scorer);

    const auto& classifier = section(record, "classifier");
    c.classifier_datasets = get_or(classifier, "datasets", c.classifier_datasets);

    c.seed = get_or(record, "seed", c.seed);
    c.embed_batch_size = get_or(record, "embed_batch_size", c.embed_batch_size);
    c.workers = get_or(record, "workers", c.workers);
  } catch (const Json::exception& e) {
    fail(ErrorCode::kConfig, fmt::format("malformed config: {}", e.what()));
  } catch (const std::logic_error& e) {
    fail(ErrorCode::kConfig, fmt::format("malformed config: {}", e.what()));
  }
  if (c.relevance_reranker.empty() && !c.rerankers.empty()) c.relevance_reranker = c.rerankers.front();
  if (c.relevance_judge.empty() && !c.judges.empty()) c.relevance_judge = c.judges.front();
  if (c.mining_scorer.empty() && !c.rerankers.empty()) c.mining_scorer = c.rerankers.front();
  if (!c.chunk_budgets.empty()) {
    if (c.answer_chunk_budget == 0) {
      c.answer_chunk_budget = *std::max_element(c.chunk_budgets.begin(), c.chunk_budgets.end());
    }
    if (c.mining_chunk_budget == 0) {
      c.mining_chunk_budget = *std::min_element(c.chunk_budgets.begin(), c.chunk_budgets.end());
    }
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kConfig, fmt::format("config {} does not exist", path.string()));
  Json record;
  try {
    record = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::kConfig, fmt::format("config {} is not valid JSON: {}", path.string(), e.what()));
  }
  return config_from_json(record, fs::absolute(path).parent_path());
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["name"] = c.name;
  j["documents"] = c.documents;
  j["corpus_prefix"] = c.corpus_prefix;
  j["chunk_budgets"] = c.chunk_budgets;
  j["tokenizer_id"] = c.tokenizer_id;
  j["store_root"] = c.store_root;
  j["runs_root"] = c.runs_root;
  j["queries"] = c.queries;
  j["qa_dataset"] = c.qa_dataset;
  Json backends = Json::array();
  for (const auto& b : c.backends) backends.push_back(backend::to_json(b));
  j["backends"] = std::move(backends);
  j["retrievers"] = c.retrievers;
  j["rerankers"] = c.rerankers;
  j["judges"] = c.judges;
  j["generator"] = c.generator;
  Json per_budget = Json::object();
  for (const auto& [budget, k] : c.candidate_k_per_budget) per_budget[std::to_string(budget)] = k;
  j["retrieval"] = {{"k1", c.bm25.k1},
                    {"b", c.bm25.b},
                    {"depth", c.retrieval_depth},
                    {"candidate_k", c.candidate_k},
                    {"candidate_k_per_budget", per_budget},
                    {"metric_k", c.metric_k},
                    {"gain_mode", metrics::to_string(c.gain_mode)}};
  j["thresholds"] = {{"default", c.threshold}, {"per_backend", c.thresholds}};
  j["relevance"] = {{"retriever", c.relevance_retriever},
                    {"reranker", c.relevance_reranker},
                    {"judge", c.relevance_judge},
                    {"top_k", c.relevance_top_k}};
  j["answers"] = {{"n_distractors", c.n_distractors},
                  {"chunk_budget", c.answer_chunk_budget},
                  {"temperature", c.generation.temperature},
                  {"max_tokens", c.generation.max_tokens}};
  j["mining"] = {{"random_negatives", c.mining.random_negatives},
                 {"indoc_negatives", c.mining.indoc_negatives},
                 {"pool_size", c.mining.pool_size},
                 {"chunk_budget", c.mining_chunk_budget},
                 {"scorer", c.mining_scorer}};
  j["classifier"] = {{"datasets", c.classifier_datasets}};
  j["seed"] = c.seed;
  j["embed_batch_size"] = c.embed_batch_size;
  j["workers"] = c.workers;
  return j;
}

void validate(const ExperimentConfig& c) {
  auto check = [](bool ok, const std::string& message) {
    if (!ok) fail(ErrorCode::kConfig, message);
  };
  std::set<std::string> ids;
  for (const auto& b : c.backends) {
    backend::validate(b);
    check(ids.insert(b.backend_id).second, fmt::format("duplicate backend_id '{}'", b.backend_id));
    check(b.backend_id != kBm25 && b.backend_id != rerank::kEnsembleId,
          fmt::format("backend_id '{}' is reserved", b.backend_id));
  }
  auto expect = [&](const std::string& id, backend::Kind kind, std::string_view role) {
    check(ids.count(id) > 0, fmt::format("{} '{}' is not a configured backend", role, id));
    check(c.profile(id).kind == kind,
          fmt::format("{} '{}' must be a {} backend", role, id, backend::to_string(kind)));
  };
  check(!c.chunk_budgets.empty(), "chunk_budgets must not be empty");
  for (const auto budget : c.chunk_budgets) {
    check(budget >= corpus::kMinChunkBudget, fmt::format("chunk budget {} is below {}", budget, corpus::kMinChunkBudget));
  }
  check(std::set<std::size_t>(c.chunk_budgets.begin(), c.chunk_budgets.end()).size() == c.chunk_budgets.size(),
        "chunk_budgets must be distinct");
  check(!c.corpus_prefix.empty(), "corpus_prefix must not be empty");
  check(c.tokenizer_id == text::kTokenizerId, fmt::format("unknown tokenizer '{}'", c.tokenizer_id));
  for (const auto& r : c.retrievers) {
    if (is_dense(r)) expect(r, backend::Kind::kEmbed, "retriever");
  }
  for (const auto& r : c.rerankers) expect(r, backend::Kind::kRerank, "reranker");
  for (const auto& j : c.judges) expect(j, backend::Kind::kGenerate, "judge");
  if (!c.generator.empty()) expect(c.generator, backend::Kind::kGenerate, "generator");
  if (!c.relevance_reranker.empty()) expect(c.relevance_reranker, backend::Kind::kRerank, "relevance reranker");
  if (!c.relevance_judge.empty()) expect(c.relevance_judge, backend::Kind::kGenerate, "relevance judge");
  if (!c.mining_scorer.empty()) expect(c.mining_scorer, backend::Kind::kRerank, "mining scorer");
  check(std::find(c.retrievers.begin(), c.retrievers.end(), c.relevance_retriever) != c.retrievers.end(),
        fmt::format("relevance retriever '{}' is not among the retrievers", c.relevance_retriever));
  check(c.bm25.k1 > 0.0, "BM25 k1 must be > 0");
  check(c.bm25.b >= 0.0 && c.bm25.b <= 1.0, "BM25 b must lie in [0, 1]");
  check(c.retrieval_depth >= 1 && c.candidate_k >= 1, "retrieval depth and candidate_k must be >= 1");
  for (const auto& [budget, k] : c.candidate_k_per_budget) check(k >= 1, "candidate_k must be >= 1");
  check(!c.metric_k.empty(), "metric_k must not be empty");
  for (const auto k : c.metric_k) check(k >= 1, "metric_k values must be >= 1");
  for (const auto k : c.relevance_top_k) check(k >= 1, "relevance top_k values must be >= 1");
  check(c.threshold > 0.0 && c.threshold < 1.0, "default threshold must lie in (0, 1)");
  for (const auto& [id, t] : c.thresholds) {
    check(t > 0.0 && t < 1.0, fmt::format("threshold for '{}' must lie in (0, 1)", id));
  }
  check(c.embed_batch_size >= 1 && c.workers >= 1, "embed_batch_size and workers must be >= 1");
  check(c.mining.pool_size >= c.mining.random_negatives, "mining pool_size must be >= random_negatives");
}

std::string compute_run_id(const ExperimentConfig& config) {
  return sha256_hex(to_json(config).dump() + '\n' + std::string(kCodeVersion)).substr(0, 16);
}

Json to_json(const Counters& counters) {
  return {{"items_in", counters.items_in},
          {"scored", counters.scored},
          {"skipped", counters.skipped},
          {"unevaluable", counters.unevaluable},
          {"unparseable", counters.unparseable}};
}

std::optional<Json> load_run_record(const ExperimentConfig& config, std::string_view run_id) {
  const auto path = config.resolve(config.runs_root) / std::string(run_id) / "run.json";
  if (!fs::exists(path)) return std::nullopt;
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::kCorruption, fmt::format("run record {} is not JSON: {}", path.string(), e.what()));
  }
}

// ---------------------------------------------------------------------------
// Runner

Runner::Runner(ExperimentConfig config, std::optional<std::string> run_id) : config_(std::move(config)) {
  validate(config_);
  run_id_ = run_id.value_or(compute_run_id(config_));
  if (const auto existing = load_run_record(config_, run_id_)) {
    const Json stages = existing->value("stages", Json::object());
    for (const auto& [name, s] : stages.items()) {
      StageRecord r;
      r.status = s.value("status", "");
      r.started = s.value("started", "");
      r.finished = s.value("finished", "");
      r.artifacts = s.value("artifacts", std::vector<std::string>{});
      r.error = s.value("error", "");
      const auto counters = s.value("counters", Json::object());
      r.counters.items_in = counters.value("items_in", std::size_t{0});
      r.counters.scored = counters.value("scored", std::size_t{0});
      r.counters.skipped = counters.value("skipped", std::size_t{0});
      r.counters.unevaluable = counters.value("unevaluable", std::size_t{0});
      r.counters.unparseable = counters.value("unparseable", std::size_t{0});
      stages_[name] = r;
    }
  }
}

fs::path Runner::run_dir() const { return config_.resolve(config_.runs_root) / run_id_; }

std::shared_ptr<backend::BackendClient> Runner::client(std::string_view backend_id) {
  if (!registry_.contains(backend_id)) {
    auto profile = config_.profile(backend_id);
    // Stub fixture paths are written relative to the config file.
    const auto at = profile.base_url.find("fixture=");
    if (profile.is_stub() && at != std::string::npos) {
      const auto begin = at + std::string_view("fixture=").size();
      const auto end = profile.base_url.find('&', begin);
      const auto path = profile.base_url.substr(begin, end == std::string::npos ? end : end - begin);
      profile.base_url.replace(begin, path.size(), config_.resolve(path).string());
    }
    registry_.add(backend::connect(profile));
  }
  return registry_.get(backend_id);
}

void Runner::save_record() const {
  Json record;
  record["run_id"] = run_id_;
  record["code_version"] = kCodeVersion;
  record["config"] = to_json(config_);
  record["prompts"] = {{"context_relevance_sha256", sha256_hex(judge::relevance_prompt("{question}", "{doc}"))},
                       {"answer_templates", judge::kAnswerTemplatesVersion},
                       {"answer_templates_sha256", judge::answer_templates_sha256()}};
  Json stages = Json::object();
  for (const auto& [name, s] : stages_) {
    stages[name] = {{"status", s.status},       {"started", s.started},
                    {"finished", s.finished},   {"artifacts", s.artifacts},
                    {"counters", to_json(s.counters)}, {"error", s.error}};
  }
  record["stages"] = std::move(stages);
  write_file(run_dir() / "run.json", record.dump(2) + "\n");
}

void Runner::run_stage(const std::string& name, const std::function<void(StageRecord&)>& body) {
  StageRecord record;
  record.started = utc_now();
  try {
    body(record);
    record.status = "completed";
  } catch (const std::exception& e) {
    record.status = "failed";
    record.error = e.what();
  }
  record.finished = utc_now();
  stages_[name] = record;
  save_record();
  if (record.status == "failed") {
    fail(ErrorCode::kStage, fmt::format("stage '{}' failed: {}", name, record.error));
  }
}

void Runner::ingest() {
  run_stage("ingest", [&](StageRecord& rec) {
    const auto documents = corpus::read_documents(config_.resolve(config_.documents));
    const auto store = config_.resolve(config_.store_root);
    for (const auto budget : config_.chunk_budgets) {
      const auto id = config_.corpus_id(budget);
      const auto result = corpus::ingest(documents, id, budget, config_.tokenizer_id, store);
      rec.counters.items_in += documents.size();
      rec.counters.scored += result.manifest.doc_count;
      rec.counters.skipped += result.rejected.size();
      rec.artifacts.push_back(fmt::format("store:{}/manifest.json", id));
      rec.artifacts.push_back(fmt::format("store:{}/passages.jsonl", id));
    }
  });
}

void Runner::index() {
  run_stage("index", [&](StageRecord& rec) {
    const auto store = config_.resolve(config_.store_root);
    for (const auto budget : config_.chunk_budgets) {
      const auto id = config_.corpus_id(budget);
      const auto built = lexical::build_and_persist(store, id, config_.bm25);
      rec.counters.items_in += built.passage_count();
      rec.counters.scored += built.passage_count();
      rec.artifacts.push_back(fmt::format("store:{}/bm25.json", id));
    }
  });
}

void Runner::embed() {
  run_stage("embed", [&](StageRecord& rec) {
    const auto store = config_.resolve(config_.store_root);
    for (const auto budget : config_.chunk_budgets) {
      const auto id = config_.corpus_id(budget);
      const auto passages = corpus::load_passages(store, id);
      for (const auto& retriever : config_.retrievers) {
        if (!is_dense(retriever)) continue;
        const auto vectors = dense::embed_corpus(passages, id, *client(retriever), config_.embed_batch_size);
        dense::write_store(dense::store_path(store, id, retriever), vectors);
        rec.counters.items_in += passages.size();
        rec.counters.scored += vectors.size();
        rec.artifacts.push_back(fmt::format("store:{}/vectors/{}.vec", id, retriever));
      }
    }
  });
}

void Runner::mine() {
  run_stage("mine", [&](StageRecord& rec) {
    require(!config_.mining_scorer.empty(), "mining needs a scorer (configure a reranker)");
    const auto store = config_.resolve(config_.store_root);
    const corpus::PassageTable table(corpus::load_passages(store, config_.corpus_id(config_.mining_chunk_budget)));
    const auto queries = read_queries(config_.resolve(config_.queries));
    std::vector<Query> usable;
    for (const auto& q : queries) {
      if (q.gold_passage_id && table.find(*q.gold_passage_id) != nullptr) usable.push_back(q);
    }
    rec.counters.items_in = queries.size();
    rec.counters.skipped = queries.size() - usable.size();
    require(!usable.empty(), "no query has a gold_passage_id in the mining corpus");
    auto settings = config_.mining;
    settings.seed = derive_seed(config_.seed, "mining");
    const auto dataset = mining::build_dataset(usable, table, *client(config_.mining_scorer), settings);
    rec.counters.scored = usable.size();
    mining::write_dataset(run_dir() / "datasets" / "mined.jsonl", dataset);
    rec.artifacts = {"datasets/mined.jsonl", "datasets/mined.jsonl.meta.json"};
  });
}

void Runner::ground_truth() {
  run_stage("ground-truth", [&](StageRecord& rec) {
    require(!config_.rerankers.empty(), "ground truth needs at least one reranker");
    const auto store = config_.resolve(config_.store_root);
    const auto queries = read_queries(config_.resolve(config_.queries));
    std::vector<std::shared_ptr<backend::BackendClient>> owned;
    std::vector<backend::BackendClient*> rerankers;
    for (const auto& id : config_.rerankers) {
      owned.push_back(client(id));
      rerankers.push_back(owned.back().get());
    }
    rerank::GroundTruthSettings settings;
    settings.default_threshold = config_.threshold;
    settings.thresholds = config_.thresholds;

    for (const auto budget : config_.chunk_budgets) {
      const auto id = config_.corpus_id(budget);
      const corpus::PassageTable table(corpus::load_passages(store, id));
      const auto index = load_index_checked(store, id, config_.bm25);
      settings.candidate_k = config_.candidate_k_for(budget);

      std::vector<rerank::GroundTruth> truths(queries.size());
      parallel_for(queries.size(), config_.workers, [&](std::size_t i) {
        truths[i] = rerank::build_ground_truth(queries[i], index, table, rerankers, settings);
      });

      std::vector<Json> judgments;
      std::vector<Json> pools;
      for (const auto& t : truths) {
        rec.counters.items_in += rerankers.size();
        if (t.empty_pool) rec.counters.unevaluable += rerankers.size();
        rec.counters.skipped += t.skipped.size();
        rec.counters.scored += t.judgments.size();
        for (const auto& j : t.judgments) judgments.push_back(to_json(j));
        pools.push_back(rerank::to_json(t));
      }
      write_jsonl(run_dir() / "ground_truth" / (id + ".jsonl"), judgments);
      write_jsonl(run_dir() / "ground_truth" / (id + ".pools.jsonl"), pools);
      rec.artifacts.push_back(fmt::format("ground_truth/{}.jsonl", id));
      rec.artifacts.push_back(fmt::format("ground_truth/{}.pools.jsonl", id));
    }
  });
}

metrics::AggregateReport Runner::eval_retrieval() {
  metrics::AggregateReport aggregate;
  run_stage("eval-retrieval", [&](StageRecord& rec) {
    const auto store = config_.resolve(config_.store_root);
    const auto queries = read_queries(config_.resolve(config_.queries));
    const std::size_t max_metric_k = *std::max_element(config_.metric_k.begin(), config_.metric_k.end());
    const std::size_t depth = std::max(config_.retrieval_depth, max_metric_k);
    std::vector<Json> eval_records;

    for (const auto budget : config_.chunk_budgets) {
      const auto id = config_.corpus_id(budget);
      const auto judgments = read_judgments(run_dir() / "ground_truth" / (id + ".jsonl"));
      std::map<std::string, std::vector<const Judgment*>> by_query;
      for (const auto& j : judgments) by_query[j.query_id].push_back(&j);
      std::set<std::string> empty_pools;
      for (const auto& p : read_jsonl(run_dir() / "ground_truth" / (id + ".pools.jsonl"))) {
        if (p.value("empty_pool", false)) empty_pools.insert(p.at("query_id").get<std::string>());
      }

      for (const auto& retriever : config_.retrievers) {
        std::vector<std::vector<ScoredHit>> hits(queries.size());
        if (is_dense(retriever)) {
          const auto vectors = dense::load_store(dense::store_path(store, id, retriever));
          auto embedder = client(retriever);
          parallel_for(queries.size(), config_.workers, [&](std::size_t i) {
            hits[i] = dense::dense_search(vectors, queries[i].text, *embedder, depth);
          });
        } else {
          const auto index = load_index_checked(store, id, config_.bm25);
          parallel_for(queries.size(), config_.workers, [&](std::size_t i) {
            hits[i] = lexical::bm25_search(index, queries[i].text, depth).hits;
          });
        }
        std::vector<Json> ranking_records;
        for (std::size_t i = 0; i < queries.size(); ++i) {
          Json hit_records = Json::array();
          for (const auto& h : hits[i]) hit_records.push_back(to_json(h));
          ranking_records.push_back({{"query_id", queries[i].query_id}, {"hits", std::move(hit_records)}});
        }
        write_jsonl(run_dir() / ranking_file(id, retriever), ranking_records);
        rec.artifacts.push_back(ranking_file(id, retriever));

        for (std::size_t i = 0; i < queries.size(); ++i) {
          const auto retrieved = passage_ids(hits[i]);
          rec.counters.items_in += config_.rerankers.size();
          if (empty_pools.count(queries[i].query_id)) {
            rec.counters.unevaluable += config_.rerankers.size();
            continue;
          }
          const auto it = by_query.find(queries[i].query_id);
          const std::size_t answered = it == by_query.end() ? 0 : it->second.size();
          rec.counters.skipped += config_.rerankers.size() - std::min(answered, config_.rerankers.size());
          if (it == by_query.end()) continue;
          for (const auto* judgment : it->second) {
            (judgment->evaluable_for_recall() ? rec.counters.scored : rec.counters.unevaluable) += 1;
            for (const auto k : config_.metric_k) {
              eval_records.push_back(
                  to_json(metrics::evaluate(id, retriever, retrieved, *judgment, k, config_.gain_mode)));
            }
          }
        }
      }
    }
    write_jsonl(run_dir() / "retrieval" / "evals.jsonl", eval_records);
    rec.artifacts.push_back("retrieval/evals.jsonl");
    aggregate = write_retrieval_report();
    for (const auto* name : {"reports/retrieval.txt", "reports/retrieval.jsonl"}) rec.artifacts.push_back(name);
    for (const auto metric : metrics::kMetricNames) {
      rec.artifacts.push_back(fmt::format("reports/retrieval_{}.csv", metric));
    }
  });
  return aggregate;
}

metrics::AggregateReport Runner::write_retrieval_report() {
  std::vector<metrics::RetrievalEval> evals;
  for (const auto& record : read_jsonl(run_dir() / "retrieval" / "evals.jsonl")) {
    evals.push_back(metrics::retrieval_eval_from_json(record));
  }
  const auto aggregate = metrics::aggregate(evals);
  write_file(reports_dir() / "retrieval.txt", report::render_aggregate(aggregate));
  write_file(reports_dir() / "retrieval.jsonl", report::aggregate_jsonl(aggregate));
  for (const auto& [metric, csv] : report::aggregate_csv(aggregate)) {
    write_file(reports_dir() / fmt::format("retrieval_{}.csv", metric), csv);
  }
  return aggregate;
}

judge::FrequencyTable Runner::judge_relevance() {
  judge::FrequencyTable table;
  run_stage("judge-relevance", [&](StageRecord& rec) {
    require(!config_.relevance_judge.empty(), "relevance judging needs a judge backend");
    require(!config_.relevance_reranker.empty(), "relevance judging needs a reranker");
    require(!config_.relevance_top_k.empty(), "relevance top_k grid must not be empty");
    const auto store = config_.resolve(config_.store_root);
    const auto queries = read_queries(config_.resolve(config_.queries));
    const std::size_t depth = *std::max_element(config_.relevance_top_k.begin(), config_.relevance_top_k.end());
    auto judge_client = client(config_.relevance_judge);

    for (const auto budget : config_.chunk_budgets) {
      const auto id = config_.corpus_id(budget);
      const corpus::PassageTable table_of_passages(corpus::load_passages(store, id));
      const auto retrieved = read_rankings(run_dir() / ranking_file(id, config_.relevance_retriever));
      std::map<std::string, std::vector<std::string>> reranked;
      for (const auto& j : read_judgments(run_dir() / "ground_truth" / (id + ".jsonl"))) {
        if (j.backend_id == config_.relevance_reranker) reranked[j.query_id] = j.ranked;
      }

      struct Slot {
        const Query* query;
        std::string passage_id;
        judge::Source source;
        std::size_t rank;
      };
      std::vector<Slot> slots;
      for (const auto& q : queries) {
        for (const auto source : {judge::Source::kRetriever, judge::Source::kReranked}) {
          const auto& lists = source == judge::Source::kRetriever ? retrieved : reranked;
          const auto it = lists.find(q.query_id);
          if (it == lists.end()) continue;
          for (std::size_t r = 0; r < std::min(depth, it->second.size()); ++r) {
            slots.push_back({&q, it->second[r], source, r + 1});
          }
        }
      }

      // Each (query, passage) pair is judged once even when both sources list it.
      std::map<std::pair<std::string, std::string>, std::size_t> unique_index;
      std::vector<std::pair<const Query*, std::string>> unique;
      for (const auto& s : slots) {
        if (unique_index.emplace(std::make_pair(s.query->query_id, s.passage_id), unique.size()).second) {
          unique.emplace_back(s.query, s.passage_id);
        }
      }
      std::vector<std::optional<judge::RelevanceLabel>> judged(unique.size());
      parallel_for(unique.size(), config_.workers, [&](std::size_t i) {
        try {
          judged[i] = judge::judge_context_relevance(*unique[i].first, table_of_passages.at(unique[i].second),
                                                     *judge_client);
        } catch (const Error& e) {
          if (!is_backend_failure(e)) throw;
        }
      });

      std::vector<Json> labels;
      for (const auto& s : slots) {
        ++rec.counters.items_in;
        const auto& cached = judged[unique_index.at({s.query->query_id, s.passage_id})];
        if (!cached) {
          ++rec.counters.skipped;
          continue;
        }
        auto label = *cached;
        label.source = s.source;
        label.rank = s.rank;
        label.corpus_id = id;
        label.chunk_budget = budget;
        (label.score ? rec.counters.scored : rec.counters.unparseable) += 1;
        labels.push_back(to_json(label));
      }
      write_jsonl(run_dir() / "labels" / (id + ".jsonl"), labels);
      rec.artifacts.push_back(fmt::format("labels/{}.jsonl", id));
    }
    table = write_relevance_report();
    rec.artifacts.push_back("reports/relevance_frequency.txt");
    rec.artifacts.push_back("reports/relevance_frequency.json");
  });
  return table;
}

judge::FrequencyTable Runner::write_relevance_report() {
  std::vector<judge::RelevanceLabel> labels;
  for (const auto budget : config_.chunk_budgets) {
    const auto path = run_dir() / "labels" / (config_.corpus_id(budget) + ".jsonl");
    if (!fs::exists(path)) fail(ErrorCode::kNotFound, fmt::format("missing artifact {}", path.string()));
    for (const auto& record : read_jsonl(path)) labels.push_back(judge::relevance_label_from_json(record));
  }
  const auto table = judge::relevance_frequency_table(labels, config_.relevance_top_k, config_.chunk_budgets);
  write_file(reports_dir() / "relevance_frequency.txt", report::render_frequency_table(table));
  write_file(reports_dir() / "relevance_frequency.json", judge::to_json(table).dump(2) + "\n");
  return table;
}

judge::AnswerReport Runner::eval_answers() {
  judge::AnswerReport answer_report;
  run_stage("eval-answers", [&](StageRecord& rec) {
    require(!config_.qa_dataset.empty(), "answer evaluation needs a qa_dataset");
    require(!config_.generator.empty(), "answer evaluation needs a generator backend");
    require(!config_.judges.empty(), "answer evaluation needs at least one judge");
    const auto store = config_.resolve(config_.store_root);
    const corpus::PassageTable passages(corpus::load_passages(store, config_.corpus_id(config_.answer_chunk_budget)));
    const auto items = read_queries(config_.resolve(config_.qa_dataset));
    auto generator = client(config_.generator);
    std::vector<std::shared_ptr<backend::BackendClient>> owned;
    std::vector<backend::BackendClient*> judges;
    for (const auto& id : config_.judges) {
      owned.push_back(client(id));
      judges.push_back(owned.back().get());
    }

    std::vector<judge::NoisyContextItem> noisy(items.size());
    std::vector<std::vector<std::string>> contexts(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto gold = judge::resolve_gold(items[i], passages);
      noisy[i] = judge::build_noisy_context(items[i], gold, passages, config_.n_distractors,
                                            derive_seed(config_.seed, "noisy-context/" + items[i].query_id));
      for (const auto& pid : noisy[i].context_ids) {
        contexts[i].push_back(pid == gold.passage_id ? gold.text : passages.at(pid).text);
      }
    }

    const judge::AnswerJudging with_context{true, config_.n_distractors > 0};
    const judge::AnswerJudging without_context{false, false};
    std::vector<std::optional<judge::AnswerEval>> arm_with(items.size());
    std::vector<std::optional<judge::AnswerEval>> arm_without(items.size());
    parallel_for(items.size() * 2, config_.workers, [&](std::size_t task) {
      const std::size_t i = task / 2;
      const bool use_context = task % 2 == 0;
      const auto& item = items[i];
      const std::vector<std::string> none;
      const auto& context = use_context ? contexts[i] : none;
      try {
        const auto answer = judge::generate_answer(item, context, *generator, config_.generation);
        auto eval = judge::judge_answer(item, answer, context, item.gold_answer.value_or(""), judges,
                                        use_context ? with_context : without_context);
        eval.generator_backend_id = generator->id();
        eval.with_context = use_context;
        (use_context ? arm_with : arm_without)[i] = std::move(eval);
      } catch (const Error& e) {
        if (!is_backend_failure(e)) throw;
      }
    });

    std::vector<Json> noisy_records;
    for (const auto& n : noisy) noisy_records.push_back(judge::to_json(n));
    std::vector<Json> eval_records;
    for (std::size_t i = 0; i < items.size(); ++i) {
      for (const auto* arm : {&arm_with, &arm_without}) {
        ++rec.counters.items_in;
        const auto& e = (*arm)[i];
        if (!e) {
          ++rec.counters.skipped;
          continue;
        }
        const bool parsed = e->accuracy.has_value() || e->faithfulness.has_value() || e->relevance.has_value();
        (parsed ? rec.counters.scored : rec.counters.unparseable) += 1;
        eval_records.push_back(judge::to_json(*e));
      }
    }
    write_jsonl(run_dir() / "answers" / "noisy_context.jsonl", noisy_records);
    write_jsonl(run_dir() / "answers" / "answers.jsonl", eval_records);
    write_file(run_dir() / "answers" / "meta.json",
               Json{{"items", items.size()},
                    {"n_distractors", config_.n_distractors},
                    {"chunk_budget", config_.answer_chunk_budget},
                    {"temperature", config_.generation.temperature},
                    {"max_tokens", config_.generation.max_tokens},
                    {"answer_templates", judge::kAnswerTemplatesVersion},
                    {"answer_templates_sha256", judge::answer_templates_sha256()}}
                       .dump(2) + "\n");
    rec.artifacts = {"answers/noisy_context.jsonl", "answers/answers.jsonl", "answers/meta.json"};
    answer_report = write_answer_report();
    rec.artifacts.push_back("reports/answers.txt");
    rec.artifacts.push_back("reports/answers.json");
  });
  return answer_report;
}

judge::AnswerReport Runner::write_answer_report() {
  const auto meta_path = run_dir() / "answers" / "meta.json";
  if (!fs::exists(meta_path)) fail(ErrorCode::kNotFound, fmt::format("missing artifact {}", meta_path.string()));
  const auto meta = Json::parse(read_file(meta_path));
  std::vector<judge::AnswerEval> with_context;
  std::vector<judge::AnswerEval> without_context;
  for (const auto& record : read_jsonl(run_dir() / "answers" / "answers.jsonl")) {
    auto e = judge::answer_eval_from_json(record);
    (e.with_context ? with_context : without_context).push_back(std::move(e));
  }
  const auto report = judge::answer_report(with_context, without_context, meta.at("items").get<std::size_t>(),
                                           meta.at("n_distractors").get<std::size_t>() > 0);
  write_file(reports_dir() / "answers.txt", report::render_answer_report(report));
  write_file(reports_dir() / "answers.json", judge::to_json(report).dump(2) + "\n");
  return report;
}

std::vector<rerank::ClassifierReport> Runner::eval_classifier() {
  std::vector<rerank::ClassifierReport> reports;
  run_stage("eval-classifier", [&](StageRecord& rec) {
    require(!config_.rerankers.empty(), "classifier evaluation needs at least one reranker");
    std::map<std::string, fs::path> subsets;
    for (const auto& [name, path] : config_.classifier_datasets) subsets[name] = config_.resolve(path);
    if (subsets.empty()) subsets["mined"] = run_dir() / "datasets" / "mined.jsonl";

    std::vector<Json> records;
    for (const auto& [name, path] : subsets) {
      const auto dataset = mining::read_dataset(path);
      for (const auto& id : config_.rerankers) {
        const double threshold = config_.thresholds.count(id) ? config_.thresholds.at(id) : config_.threshold;
        const auto r = rerank::evaluate_reranker_classifier(dataset, *client(id), threshold, name);
        rec.counters.items_in += r.items;
        rec.counters.skipped += r.skipped;
        rec.counters.scored += r.items - r.skipped;
        records.push_back(rerank::to_json(r));
      }
    }
    write_jsonl(run_dir() / "classifier" / "reports.jsonl", records);
    rec.artifacts = {"classifier/reports.jsonl"};
    reports = write_classifier_report();
    rec.artifacts.push_back("reports/classifier.txt");
  });
  return reports;
}

std::vector<rerank::ClassifierReport> Runner::write_classifier_report() {
  std::vector<rerank::ClassifierReport> reports;
  for (const auto& record : read_jsonl(run_dir() / "classifier" / "reports.jsonl")) {
    rerank::ClassifierReport r;
    r.subset = record.at("subset").get<std::string>();
    r.backend_id = record.at("backend_id").get<std::string>();
    r.threshold = record.at("threshold").get<double>();
    r.items = record.at("items").get<std::size_t>();
    r.skipped = record.at("skipped").get<std::size_t>();
    const auto& m = record.at("metrics");
    metrics::ConfusionCounts counts;
    counts.tp = m.at("tp").get<std::size_t>();
    counts.fp = m.at("fp").get<std::size_t>();
    counts.fn = m.at("fn").get<std::size_t>();
    counts.tn = m.at("tn").get<std::size_t>();
    r.metrics = metrics::classifier_metrics(counts);
    reports.push_back(std::move(r));
  }
  write_file(reports_dir() / "classifier.txt", report::render_classifier(reports));
  return reports;
}

void Runner::report() {
  run_stage("report", [&](StageRecord& rec) {
    if (fs::exists(run_dir() / "retrieval" / "evals.jsonl")) {
      write_retrieval_report();
      rec.artifacts.push_back("reports/retrieval.txt");
    }
    bool have_labels = true;
    for (const auto budget : config_.chunk_budgets) {
      have_labels = have_labels && fs::exists(run_dir() / "labels" / (config_.corpus_id(budget) + ".jsonl"));
    }
    if (have_labels) {
      write_relevance_report();
      rec.artifacts.push_back("reports/relevance_frequency.txt");
    }
    if (fs::exists(run_dir() / "answers" / "meta.json")) {
      write_answer_report();
      rec.artifacts.push_back("reports/answers.txt");
    }
    if (fs::exists(run_dir() / "classifier" / "reports.jsonl")) {
      write_classifier_report();
      rec.artifacts.push_back("reports/classifier.txt");
    }
    if (rec.artifacts.empty()) fail(ErrorCode::kNotFound, "no artifacts to report on for this run");
  });
}

void Runner::run_pipeline() {
  ingest();
  index();
  embed();
  ground_truth();
  eval_retrieval();
  judge_relevance();
  if (!config_.qa_dataset.empty()) eval_answers();
}

}  // namespace rageval::runner
