#include <doctest.h>

#include <random>

#include "../support.hpp"
#include "rageval/metrics.hpp"

using namespace rageval;
using metrics::GainMode;
using testing::error_code;

namespace {

Judgment judgment(std::vector<std::string> ranked, std::set<std::string> relevant, std::map<std::string, double> gains = {}) {
  Judgment j;
  j.query_id = "q";
  j.backend_id = "r";
  j.ranked = std::move(ranked);
  j.candidate_pool = j.ranked;
  j.relevant_set = std::move(relevant);
  if (gains.empty()) {
    for (std::size_t i = 0; i < j.ranked.size(); ++i) gains[j.ranked[i]] = j.relevant_set.count(j.ranked[i]) ? 0.9 : 0.1;
  }
  j.gains = std::move(gains);
  return j;
}

using Ids = std::vector<std::string>;

metrics::RetrievalEval eval(const std::string& backend, const std::string& query, std::optional<double> recall) {
  metrics::RetrievalEval e;
  e.corpus_id = "c";
  e.retriever_id = "bm25";
  e.judgment_backend = backend;
  e.query_id = query;
  e.k = 5;
  e.recall = recall;
  e.evaluable = recall.has_value();
  return e;
}

}  // namespace

TEST_CASE("recall examples") {
  const auto j = judgment({"a", "b"}, {"a", "b"});
  CHECK(metrics::recall_at_k(Ids{"a", "x", "b"}, j, 3).value == 1.0);
  CHECK(metrics::recall_at_k(Ids{"x", "y", "z"}, j, 3).value == 0.0);
  const auto abc = judgment({"a", "b", "c"}, {"a", "b", "c"});
  CHECK(metrics::recall_at_k(Ids{"a", "c", "x"}, abc, 2).value == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  const auto empty = metrics::recall_at_k(Ids{"a"}, judgment({"a"}, {}), 1);
  CHECK_FALSE(empty.evaluable);
}

TEST_CASE("precision examples") {
  const auto j = judgment({"a", "b"}, {"a"});
  CHECK(metrics::precision_at_k(Ids{"a", "b"}, j, 2).value == 0.5);
  CHECK(metrics::precision_at_k(Ids{"x", "y"}, j, 2).value == 0.0);
  CHECK(metrics::precision_at_k(Ids{"a"}, j, 4).value == 0.25);
  CHECK(metrics::precision_at_k(Ids{"a", "a"}, j, 2).value == 0.5);
}

TEST_CASE("nDCG examples") {
  const auto j = judgment({"a", "b", "c"}, {"a", "b"}, {{"a", 0.9}, {"b", 0.6}, {"c", 0.2}});
  CHECK(metrics::ndcg_at_k(Ids{"a", "b", "c"}, j, 3, GainMode::kGraded).value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(metrics::ndcg_at_k(Ids{"a", "b"}, j, 2, GainMode::kGraded).value == doctest::Approx(1.0).epsilon(1e-15));
  const auto single = judgment({"a"}, {"a"});
  CHECK(metrics::ndcg_at_k(Ids{"x", "a"}, single, 2, GainMode::kBinary).value ==
        doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-15));
  CHECK(metrics::ndcg_at_k(Ids{"x", "a"}, single, 2, GainMode::kBinary).value == doctest::Approx(0.6309).epsilon(1e-4));
  CHECK(metrics::ndcg_at_k(Ids{"x", "y"}, j, 2, GainMode::kGraded).value == 0.0);
  const auto no_gain = judgment({"a"}, {}, {{"a", 0.0}});
  CHECK_FALSE(metrics::ndcg_at_k(Ids{"a"}, no_gain, 1, GainMode::kGraded).evaluable);
}

TEST_CASE("Kendall tau examples") {
  const std::vector<double> x{3, 2, 1};
  CHECK(metrics::kendall_tau_b(x, std::vector<double>{3, 2, 1}).value == 1.0);
  CHECK(metrics::kendall_tau_b(x, std::vector<double>{1, 2, 3}).value == -1.0);
  CHECK(metrics::kendall_tau(Ids{"a", "b", "c"}, Ids{"a", "c", "b"}, 3).value == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_FALSE(metrics::kendall_tau(Ids{"a", "x"}, Ids{"a", "y"}, 2).evaluable);
  CHECK_FALSE(metrics::kendall_tau_b(x, std::vector<double>{1, 1, 1}).evaluable);
  // One tie in x: P=2, Q=0, n0=3, so 2 / sqrt(2 * 3).
  const std::vector<double> tied{2, 2, 1};
  CHECK(metrics::kendall_tau_b(tied, std::vector<double>{3, 2, 1}).value == doctest::Approx(2.0 / std::sqrt(6.0)).epsilon(1e-15));
}

TEST_CASE("tau is symmetric and hits the extremes on permutations") {
  std::mt19937_64 gen(17);
  for (std::size_t n = 3; n <= 10; ++n) {
    Ids ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("p" + std::to_string(i));
    for (int trial = 0; trial < 20; ++trial) {
      std::shuffle(ids.begin(), ids.end(), gen);
      Ids reversed(ids.rbegin(), ids.rend());
      CHECK(metrics::kendall_tau(ids, ids, n).value == 1.0);
      CHECK(metrics::kendall_tau(ids, reversed, n).value == -1.0);
      Ids other = ids;
      std::shuffle(other.begin(), other.end(), gen);
      CHECK(metrics::kendall_tau(ids, other, n).value == metrics::kendall_tau(other, ids, n).value);
    }
  }
}

TEST_CASE("random instances agree with brute force") {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto c = testing::random_metric_case(gen);
    CAPTURE(trial);
    const auto recall = metrics::recall_at_k(c.retrieved, c.judgment, c.k);
    const auto precision = metrics::precision_at_k(c.retrieved, c.judgment, c.k);
    REQUIRE(recall.evaluable == !c.judgment.relevant_set.empty());
    if (recall.evaluable) {
      CHECK(std::abs(recall.value - testing::oracle::recall(c.retrieved, c.judgment.relevant_set, c.k)) <= 1e-12);
      CHECK(std::abs(precision.value - testing::oracle::precision(c.retrieved, c.judgment.relevant_set, c.k)) <= 1e-12);
      const double count = precision.value * static_cast<double>(c.k);
      CHECK(std::abs(count - std::round(count)) <= 1e-12);
    }
    const auto ndcg = metrics::ndcg_at_k(c.retrieved, c.judgment, c.k, GainMode::kGraded);
    const double expected_ndcg = testing::oracle::ndcg(c.retrieved, c.judgment.gains, c.k);
    if (ndcg.evaluable) {
      CHECK(std::abs(ndcg.value - expected_ndcg) <= 1e-12);
      CHECK(ndcg.value <= 1.0 + 1e-12);
    } else {
      CHECK(std::isnan(expected_ndcg));
    }
    const auto tau = metrics::kendall_tau(c.retrieved, c.judgment, c.k);
    const auto expected_tau = testing::oracle::tau(c.retrieved, c.judgment, c.k);
    REQUIRE(tau.evaluable == expected_tau.has_value());
    if (tau.evaluable) CHECK(std::abs(tau.value - *expected_tau) <= 1e-12);
  }
}

TEST_CASE("recall is non-decreasing in k") {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = testing::random_metric_case(gen);
    if (c.judgment.relevant_set.empty()) continue;
    double previous = 0.0;
    for (std::size_t k = 1; k <= 12; ++k) {
      const double r = metrics::recall_at_k(c.retrieved, c.judgment, k).value;
      CHECK(r >= previous);
      previous = r;
    }
  }
}

TEST_CASE("ideal retrieval scores an nDCG of one") {
  std::mt19937_64 gen(10);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = testing::random_metric_case(gen);
    const auto result = metrics::ndcg_at_k(c.judgment.ranked, c.judgment, c.k, GainMode::kGraded);
    if (result.evaluable) CHECK(result.value == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("two-stage aggregation") {
  SUBCASE("two backends, one query each") {
    const std::vector<metrics::RetrievalEval> evals{eval("r1", "q1", 1.0), eval("r2", "q1", 0.0)};
    const auto report = metrics::aggregate(evals);
    const auto row = std::find_if(report.rows.begin(), report.rows.end(), [](const auto& r) { return r.metric == "recall"; });
    REQUIRE(row != report.rows.end());
    CHECK(*row->mean == 0.5);
    CHECK(row->backends == 2);
  }
  SUBCASE("single backend is the plain query mean") {
    const std::vector<metrics::RetrievalEval> evals{eval("r1", "q1", 1.0), eval("r1", "q2", 0.5), eval("r1", "q3", 0.0)};
    const auto report = metrics::aggregate(evals);
    const auto row = std::find_if(report.rows.begin(), report.rows.end(), [](const auto& r) { return r.metric == "recall"; });
    CHECK(*row->mean == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(row->evaluated == 3);
  }
  SUBCASE("three backends with uneven query counts and unevaluable entries") {
    const std::vector<metrics::RetrievalEval> evals{
        eval("r1", "q1", 1.0), eval("r1", "q2", 0.0), eval("r1", "q3", std::nullopt),
        eval("r2", "q1", 0.25), eval("r2", "q2", std::nullopt), eval("r2", "q3", std::nullopt),
        eval("r3", "q1", std::nullopt), eval("r3", "q2", std::nullopt), eval("r3", "q3", std::nullopt),
    };
    const auto report = metrics::aggregate(evals);
    const auto row = std::find_if(report.rows.begin(), report.rows.end(), [](const auto& r) { return r.metric == "recall"; });
    // Backend means 0.5 and 0.25; r3 has nothing evaluable and drops out.
    CHECK(*row->mean == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(row->backends == 2);
    CHECK(row->evaluated == 3);
    CHECK(row->unevaluable == 6);
  }
}

TEST_CASE("confusion metrics") {
  metrics::ConfusionCounts counts{2, 1, 1, 2};
  const auto m = metrics::classifier_metrics(counts);
  CHECK(*m.relevant.precision == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(*m.relevant.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(*m.relevant.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(*m.accuracy == doctest::Approx(4.0 / 6.0).epsilon(1e-15));

  const auto perfect = metrics::classifier_metrics({3, 0, 0, 4});
  for (const auto* l : {&perfect.relevant, &perfect.irrelevant, &perfect.macro}) {
    CHECK(*l->precision == 1.0);
    CHECK(*l->recall == 1.0);
    CHECK(*l->f1 == 1.0);
  }
  CHECK(*perfect.accuracy == 1.0);

  const auto single_class = metrics::classifier_metrics({3, 0, 1, 0});
  CHECK_FALSE(single_class.irrelevant.recall.has_value());
  CHECK_FALSE(single_class.macro.f1.has_value());
  CHECK_FALSE(single_class.irrelevant.f1.has_value());
  CHECK(*single_class.irrelevant.precision == 0.0);
  CHECK_FALSE(metrics::classifier_metrics({}).accuracy.has_value());

  metrics::ConfusionCounts added;
  added.add(true, true);
  added.add(true, false);
  added.add(false, true);
  added.add(false, false);
  CHECK((added.tp == 1 && added.fn == 1 && added.fp == 1 && added.tn == 1));
}

TEST_CASE("retrieval eval JSON round trip") {
  const auto j = judgment({"a", "b", "c"}, {"a"});
  const auto e = metrics::evaluate("c", "bm25", Ids{"b", "a"}, j, 2, GainMode::kGraded);
  const auto back = metrics::retrieval_eval_from_json(metrics::to_json(e));
  CHECK(metrics::to_json(back) == metrics::to_json(e));
  CHECK(error_code([&] { metrics::recall_at_k(Ids{}, j, 0); }) == ErrorCode::kPrecondition);
}
