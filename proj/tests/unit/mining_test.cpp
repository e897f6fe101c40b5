#include <doctest.h>

#include <random>

#include "../support.hpp"
#include "rageval/mining.hpp"

using namespace rageval;
using backend::Kind;
using testing::error_code;
using testing::passage;

namespace {

Query gold_query(const std::string& id, const std::string& text, const std::string& gold) {
  Query q{id, text, {}, {}, {}, {}};
  q.gold_passage_id = gold;
  return q;
}

std::string serialized(const mining::ContextRelevanceDataset& d) {
  std::vector<Json> records;
  for (const auto& item : d.items) records.push_back(mining::to_json(item));
  return to_jsonl(records) + mining::metadata_json(d).dump();
}

/// Three documents: "a" with 3 passages, "b" with 2, "c" with 1; scores given per text.
struct Fixed {
  std::vector<corpus::Passage> passages{passage("a", 0, "a0"), passage("a", 1, "a1"), passage("a", 2, "a2"),
                                        passage("b", 0, "b0"), passage("b", 1, "b1"), passage("c", 0, "c0")};
  backend::StubTransport::Fixture fixture;
  Fixed() {
    const std::pair<const char*, double> table[] = {{"a0", 5}, {"a1", 1}, {"a2", -1}, {"b0", -4}, {"b1", 2}, {"c0", 0}};
    for (const auto& [text, s] : table) fixture.rerank.push_back({"q", text, s});
  }
};

std::string fmt_text(int d, int s) { return "document " + std::to_string(d) + " part " + std::to_string(s); }

}  // namespace

TEST_CASE("least-k picks the table minimum") {
  Fixed f;
  auto scorer = testing::stub_client(testing::profile("s", Kind::kRerank), f.fixture);
  const auto out = mining::least_k(gold_query("q", "q", "a#00000"), f.passages, *scorer, 2);
  REQUIRE(out.passages.size() == 2);
  CHECK(out.passages[0].passage_id == "b#00000");
  CHECK(out.passages[1].passage_id == "a#00002");
  CHECK(out.scores == std::vector<double>{-4, -1});
}

TEST_CASE("in-document negatives exhaust the document in ascending score order") {
  Fixed f;
  auto scorer = testing::stub_client(testing::profile("s", Kind::kRerank), f.fixture);
  const corpus::PassageTable table(f.passages);
  const auto q = gold_query("q", "q", "a#00000");
  const auto out = mining::mine_indoc_negatives(q, table.at("a#00000"), table, *scorer, 2);
  REQUIRE(out.passages.size() == 2);
  CHECK(out.passages[0].passage_id == "a#00002");
  CHECK(out.passages[1].passage_id == "a#00001");
  CHECK(out.warning.empty());

  const auto single = mining::mine_indoc_negatives(q, table.at("c#00000"), table, *scorer, 1);
  CHECK(single.passages.empty());
  CHECK_FALSE(single.warning.empty());
}

TEST_CASE("random negatives come from other documents, shrink the pool and are seeded") {
  Fixed f;
  auto scorer = testing::stub_client(testing::profile("s", Kind::kRerank), f.fixture);
  const corpus::PassageTable table(f.passages);
  const auto q = gold_query("q", "q", "a#00000");
  const auto out = mining::mine_random_negatives(q, table.at("a#00000"), table, *scorer, 256, 2, 7);
  // Eligible pool is all three passages outside "a"; the whole pool is scored.
  REQUIRE(out.passages.size() == 2);
  CHECK(out.passages[0].passage_id == "b#00000");
  CHECK(out.passages[1].passage_id == "c#00000");
  CHECK_FALSE(out.warning.empty());

  const auto again = mining::mine_random_negatives(q, table.at("a#00000"), table, *scorer, 2, 1, 99);
  const auto same = mining::mine_random_negatives(q, table.at("a#00000"), table, *scorer, 2, 1, 99);
  CHECK(again.passages == same.passages);
  CHECK(again.warning.empty());

  const corpus::PassageTable lonely(std::vector<corpus::Passage>{passage("a", 0, "a0"), passage("a", 1, "a1")});
  CHECK(error_code([&] { mining::mine_random_negatives(q, lonely.at("a#00000"), lonely, *scorer, 4, 1, 1); }) ==
        ErrorCode::kPrecondition);
  CHECK(error_code([&] { mining::mine_random_negatives(q, table.at("a#00000"), table, *scorer, 1, 2, 1); }) ==
        ErrorCode::kPrecondition);
}

TEST_CASE("dataset counting, strategy allocation and duplicate rejection") {
  std::vector<corpus::Passage> passages;
  std::vector<Query> queries;
  for (int d = 0; d < 10; ++d) {
    for (int s = 0; s < 3; ++s) passages.push_back(passage("doc" + std::to_string(d), s, fmt_text(d, s)));
    queries.push_back(gold_query("q" + std::to_string(d), "question " + std::to_string(d),
                                 corpus::make_passage_id("doc" + std::to_string(d), 0)));
  }
  const corpus::PassageTable table(passages);
  auto scorer = testing::stub_client(testing::profile("s", Kind::kRerank));

  mining::MiningSettings settings;
  settings.seed = 5;
  const auto dataset = mining::build_dataset(queries, table, *scorer, settings);
  CHECK(dataset.items.size() == 30);
  CHECK(std::count_if(dataset.items.begin(), dataset.items.end(), [](const auto& i) { return i.label; }) == 10);
  CHECK(mining::check_dataset(dataset, table).empty());
  CHECK(dataset.short_queries.empty());

  settings.random_negatives = 2;
  settings.indoc_negatives = 0;
  const auto random_only = mining::build_dataset(queries, table, *scorer, settings);
  CHECK(std::none_of(random_only.items.begin(), random_only.items.end(),
                     [](const auto& i) { return i.strategy == mining::Strategy::kInDocumentNegative; }));
  CHECK(mining::check_dataset(random_only, table).empty());

  auto duplicated = queries;
  duplicated.push_back(queries.front());
  CHECK(error_code([&] { mining::build_dataset(duplicated, table, *scorer, settings); }) == ErrorCode::kPrecondition);
  auto missing = queries;
  missing[0].gold_passage_id = "nowhere#00000";
  CHECK(error_code([&] { mining::build_dataset(missing, table, *scorer, settings); }) == ErrorCode::kPrecondition);
}

TEST_CASE("shuffled input gives the same dataset") {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto c = testing::random_mining_case(gen);
    const corpus::PassageTable table(c.passages);
    auto scorer = testing::stub_client(testing::profile("s", Kind::kRerank), c.scores);
    mining::MiningSettings settings;
    settings.seed = gen();
    settings.pool_size = 3;
    const auto a = mining::build_dataset(c.queries, table, *scorer, settings);
    std::shuffle(c.queries.begin(), c.queries.end(), gen);
    const auto b = mining::build_dataset(c.queries, table, *scorer, settings);
    CHECK(serialized(a) == serialized(b));
  }
}

TEST_CASE("check_dataset reports broken invariants") {
  Fixed f;
  const corpus::PassageTable table(f.passages);
  mining::ContextRelevanceDataset d;
  d.items = {{"q", "q", "a#00000", "a0", true, mining::Strategy::kPositive},
             {"q", "q", "a#00001", "a1", false, mining::Strategy::kRandomNegative},
             {"q", "q", "a#00000", "a0", false, mining::Strategy::kInDocumentNegative}};
  const auto problems = mining::check_dataset(d, table);
  CHECK(problems.size() == 2);
}

TEST_CASE("dataset files round trip with and without the sidecar") {
  testing::TempDir dir;
  Fixed f;
  const corpus::PassageTable table(f.passages);
  auto scorer = testing::stub_client(testing::profile("s", Kind::kRerank), f.fixture);
  mining::MiningSettings settings;
  settings.seed = 3;
  const std::vector<Query> queries{gold_query("q", "q", "a#00000")};
  const auto dataset = mining::build_dataset(queries, table, *scorer, settings);
  const auto path = dir.path() / "d.jsonl";
  mining::write_dataset(path, dataset);
  const auto back = mining::read_dataset(path);
  CHECK(back.items == dataset.items);
  CHECK(serialized(back) == serialized(dataset));
  CHECK(mining::metadata_json(back).at("negative_allocation") == "one-list-per-strategy");
  std::filesystem::remove(mining::metadata_path(path));
  CHECK(mining::read_dataset(path).items == dataset.items);
  CHECK(error_code([&] { mining::read_dataset(dir.path() / "none.jsonl"); }) == ErrorCode::kNotFound);
}
