// Command-line front end for the evaluation harness.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "rageval/corpus.hpp"
#include "rageval/dense.hpp"
#include "rageval/error.hpp"
#include "rageval/lexical.hpp"
#include "rageval/report.hpp"
#include "rageval/runner.hpp"

namespace {

using rageval::ErrorCode;
using rageval::runner::ExperimentConfig;
using rageval::runner::Runner;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitStage = 2;

struct Globals {
  std::string config_path;
  std::optional<std::string> run_id;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> backend_overrides;
  std::optional<double> k1;
  std::optional<double> b;
};

ExperimentConfig configure(const Globals& globals) {
  if (globals.config_path.empty()) rageval::fail(ErrorCode::kConfig, "--config is required");
  auto config = rageval::runner::load_config(globals.config_path);
  if (globals.seed) config.seed = *globals.seed;
  if (globals.k1) config.bm25.k1 = *globals.k1;
  if (globals.b) config.bm25.b = *globals.b;
  for (const auto& override_spec : globals.backend_overrides) {
    const auto eq = override_spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      rageval::fail(ErrorCode::kConfig, fmt::format("--backend expects <id>=<url>, got '{}'", override_spec));
    }
    const auto id = override_spec.substr(0, eq);
    bool found = false;
    for (auto& profile : config.backends) {
      if (profile.backend_id == id) {
        profile.base_url = override_spec.substr(eq + 1);
        found = true;
      }
    }
    if (!found) rageval::fail(ErrorCode::kConfig, fmt::format("--backend names unknown backend '{}'", id));
  }
  return config;
}

void print_retrieval(const rageval::metrics::AggregateReport& report) {
  std::cout << rageval::report::render_aggregate(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented generation evaluation harness"};
  app.require_subcommand(1);
  Globals globals;
  app.add_option("--config", globals.config_path, "Experiment config (JSON)");
  app.add_option("--run-id", globals.run_id, "Use this run id instead of the config hash");
  app.add_option("--seed", globals.seed, "Override the config seed");
  app.add_option("--k1", globals.k1, "BM25 k1 (default 1.2)");
  app.add_option("--b", globals.b, "BM25 b (default 0.75)");
  app.add_option("--backend", globals.backend_overrides, "Override a backend URL: <id>=<url>")->take_all();

  struct Stage {
    const char* name;
    const char* help;
  };
  const Stage stages[] = {
      {"ingest", "Chunk the documents into one corpus per chunk budget"},
      {"index", "Build the BM25 index of every corpus"},
      {"embed", "Embed every corpus with each dense retriever"},
      {"mine", "Build the context-relevance dataset with mined negatives"},
      {"ground-truth", "Rerank BM25 candidate pools into proxy judgments"},
      {"eval-retrieval", "Score retriever rankings against the judgments"},
      {"judge-relevance", "Label retriever and reranked passages with the LLM judge"},
      {"eval-answers", "Generate and judge answers with noisy and without context"},
      {"eval-classifier", "Evaluate rerankers as relevance classifiers"},
      {"report", "Re-render reports from the run's artifacts"},
      {"run", "ingest, index, embed, ground-truth, eval-retrieval, judge-relevance, eval-answers"},
  };
  for (const auto& s : stages) app.add_subcommand(s.name, s.help);

  auto* dump = app.add_subcommand("dump", "Print stored corpus artifacts");
  std::string dump_what;
  std::string dump_corpus;
  std::string dump_backend;
  dump->add_option("what", dump_what, "manifest | passages | index | vectors")
      ->required()
      ->check(CLI::IsMember({"manifest", "passages", "index", "vectors"}));
  dump->add_option("corpus", dump_corpus, "Corpus id")->required();
  dump->add_option("--vectors-of", dump_backend, "Embedding backend id (for 'vectors')");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const auto config = configure(globals);
    const auto store = config.resolve(config.store_root);

    if (dump->parsed()) {
      if (dump_what == "manifest") {
        std::cout << rageval::corpus::to_json(rageval::corpus::load_manifest(store, dump_corpus)).dump(2) << "\n";
      } else if (dump_what == "passages") {
        for (const auto& p : rageval::corpus::load_passages(store, dump_corpus)) {
          std::cout << rageval::corpus::to_json(p).dump() << "\n";
        }
      } else if (dump_what == "index") {
        std::cout << rageval::lexical::serialize(rageval::lexical::load_index(store, dump_corpus)) << "\n";
      } else {
        if (dump_backend.empty()) rageval::fail(ErrorCode::kConfig, "dump vectors needs --vectors-of <backend>");
        const auto vectors = rageval::dense::load_store(rageval::dense::store_path(store, dump_corpus, dump_backend));
        for (const auto& record : vectors.dump()) std::cout << record.dump() << "\n";
      }
      return kExitOk;
    }

    Runner runner(config, globals.run_id);
    const std::string command = app.get_subcommands().front()->get_name();
    std::cerr << fmt::format("run {} -> {}\n", runner.run_id(), runner.run_dir().string());
    if (command == "ingest") {
      runner.ingest();
    } else if (command == "index") {
      runner.index();
    } else if (command == "embed") {
      runner.embed();
    } else if (command == "mine") {
      runner.mine();
    } else if (command == "ground-truth") {
      runner.ground_truth();
    } else if (command == "eval-retrieval") {
      print_retrieval(runner.eval_retrieval());
    } else if (command == "judge-relevance") {
      std::cout << rageval::report::render_frequency_table(runner.judge_relevance());
    } else if (command == "eval-answers") {
      std::cout << rageval::report::render_answer_report(runner.eval_answers());
    } else if (command == "eval-classifier") {
      std::cout << rageval::report::render_classifier(runner.eval_classifier());
    } else if (command == "report") {
      runner.report();
      std::cout << fmt::format("reports written to {}\n", runner.reports_dir().string());
    } else if (command == "run") {
      runner.run_pipeline();
      std::cout << fmt::format("reports written to {}\n", runner.reports_dir().string());
    }
    return kExitOk;
  } catch (const rageval::Error& e) {
    std::cerr << fmt::format("error [{}]: {}\n", rageval::to_string(e.code()), e.what());
    return e.code() == ErrorCode::kStage ? kExitStage : kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
}
