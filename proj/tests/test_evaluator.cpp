// Ranking metrics: the tie-break contract, report arithmetic, the brute-force
// re-ranking oracle, and the popularity yardstick.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "iagnn/errors.hpp"
#include "iagnn/evaluator.hpp"
#include "iagnn/model.hpp"

using namespace iagnn;

namespace {

Example example(std::vector<int> items, std::vector<int> cats, int target, int label) {
  Example ex;
  ex.prefix_items = std::move(items);
  ex.prefix_categories = std::move(cats);
  ex.target_category = target;
  ex.label_item = label;
  return ex;
}

const std::vector<int> kItemCat = {0, 0, 0, 0, 1, 1};  // items 0-3 in cat 0, 4-5 in cat 1

CandidateIndex candidates() { return CandidateIndex::from_item_categories(kItemCat, 2); }

}  // namespace

TEST_CASE("rank_and_score follows the definition and the tie rule") {
  // label at position 2 with two higher scores -> rank 3
  auto r = rank_and_score({5.0, 4.0, 3.0, 2.0}, 2, 10);
  CHECK(r.hit == 1);
  CHECK(r.reciprocal_rank == doctest::Approx(1.0 / 3.0));

  // rank 25 is outside k=20
  std::vector<double> long_scores(30);
  for (int i = 0; i < 30; ++i) long_scores[i] = 30.0 - i;
  r = rank_and_score(long_scores, 24, 20);
  CHECK(r.hit == 0);
  CHECK(r.reciprocal_rank == 0.0);
  CHECK(rank_and_score(long_scores, 24, 25).hit == 1);

  // all scores equal: the smallest candidate index wins
  r = rank_and_score({1.0, 1.0, 1.0}, 0, 10);
  CHECK(r.hit == 1);
  CHECK(r.reciprocal_rank == doctest::Approx(1.0));
  r = rank_and_score({1.0, 1.0, 1.0}, 2, 10);
  CHECK(r.reciprocal_rank == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(rank_and_score({1.0}, 0, 0), UsageError);
  CHECK_THROWS_AS(rank_and_score({1.0}, 3, 5), DataError);
}

TEST_CASE("evaluate averages per-example results exactly") {
  // two cat-0 examples: one labels the top item, one buries the label at rank
  // 4 (outside nothing at k=10, but we also pin the mrr arithmetic)
  std::vector<Example> exs = {
      example({0}, {0}, 0, 1),
      example({1}, {0}, 0, 3),
  };
  Scorer scorer = [](const Example& ex, const std::vector<int>& cand) {
    std::vector<double> s(cand.size());
    for (std::size_t i = 0; i < cand.size(); ++i)
      s[i] = ex.label_item == 1 ? (cand[i] == 1 ? 9.0 : 1.0)   // label first
                                : (cand[i] == 3 ? -9.0 : 1.0);  // label last (rank 4)
    return s;
  };
  auto rep = evaluate_scorer(scorer, exs, candidates());
  CHECK(rep.n_examples == 2);
  CHECK(rep.at10.precision == doctest::Approx(1.0));  // both inside top-10 of 4 candidates
  CHECK(rep.at10.mrr == doctest::Approx((1.0 + 0.25) / 2.0).epsilon(1e-12));
  CHECK(rep.at20.mrr == rep.at10.mrr);

  CHECK_THROWS_AS(evaluate_scorer(scorer, {}, candidates()), DataError);
}

TEST_CASE("hit outside k drops both metrics at that k only") {
  // 25 candidates in one category; label ranks 12th
  std::vector<int> item_cat(25, 0);
  auto ci = CandidateIndex::from_item_categories(item_cat, 1);
  std::vector<Example> exs = {example({0}, {0}, 0, 11)};
  Scorer scorer = [](const Example&, const std::vector<int>& cand) {
    std::vector<double> s(cand.size());
    for (std::size_t i = 0; i < cand.size(); ++i) s[i] = -static_cast<double>(i);
    return s;  // candidate 0 highest, label (index 11) ranks 12th
  };
  auto rep = evaluate_scorer(scorer, exs, ci);
  CHECK(rep.at10.precision == 0.0);
  CHECK(rep.at10.mrr == 0.0);
  CHECK(rep.at20.precision == doctest::Approx(1.0));
  CHECK(rep.at20.mrr == doctest::Approx(1.0 / 12.0));
  // monotonicity and mrr <= precision
  CHECK(rep.at10.precision <= rep.at20.precision);
  CHECK(rep.at10.mrr <= rep.at10.precision);
  CHECK(rep.at20.mrr <= rep.at20.precision);
}

TEST_CASE("singleton candidate sets count and score guaranteed hits") {
  const std::vector<int> item_cat = {0, 1, 1};
  auto ci = CandidateIndex::from_item_categories(item_cat, 2);
  std::vector<Example> exs = {
      example({1}, {1}, 0, 0),  // category 0 has only item 0
      example({0}, {0}, 1, 2),
  };
  Scorer scorer = [](const Example&, const std::vector<int>& cand) {
    return std::vector<double>(cand.size(), 0.0);
  };
  auto rep = evaluate_scorer(scorer, exs, ci);
  CHECK(rep.n_singleton_candidates == 1);
  CHECK(rep.at10.precision == doctest::Approx(1.0));  // singleton + tie-rule hit
}

TEST_CASE("model evaluation is deterministic and survives a full oracle sweep") {
  ModelConfig cfg;
  cfg.dims = 4;
  cfg.max_prefix = 10;
  auto params = ModelParams::init(3, 6, 2, cfg);
  std::vector<Example> exs;
  for (int i = 0; i < 40; ++i)
    exs.push_back(example({i % 4, 4 + (i % 2)}, {0, 1}, i % 2, i % 2 ? 4 + (i % 2) : i % 4));
  // oracle stride 1: brute-force re-rank every example
  auto a = evaluate(params, exs, candidates(), 1);
  auto b = evaluate(params, exs, candidates(), 1);
  CHECK(a.at20.mrr == b.at20.mrr);
  CHECK(a.at10.precision == b.at10.precision);
  CHECK(a.n_examples == 40);
}

TEST_CASE("popularity baseline ranks by training frequency") {
  // labels: item 0 five times, item 1 twice, item 4 once
  std::vector<Example> train;
  for (int i = 0; i < 5; ++i) train.push_back(example({1}, {0}, 0, 0));
  for (int i = 0; i < 2; ++i) train.push_back(example({0}, {0}, 0, 1));
  train.push_back(example({0}, {0}, 1, 4));
  auto pop = PopularityBaseline::build(train, 6);
  CHECK(pop.frequency[0] == 5.0);
  CHECK(pop.frequency[1] == 2.0);
  CHECK(pop.frequency[4] == 1.0);

  auto scores = pop(train[0], {0, 1, 2, 3});
  CHECK(scores == std::vector<double>{5.0, 2.0, 0.0, 0.0});

  // hand-computed toy evaluation: labels 0 (rank 1), 1 (rank 2), 2 (rank 3 by
  // tie among zero-frequency items 2 and 3), and 4 (rank 1 in category 1)
  std::vector<Example> test_set = {
      example({1}, {0}, 0, 0),
      example({1}, {0}, 0, 1),
      example({1}, {0}, 0, 2),
      example({0}, {0}, 1, 4),
  };
  auto rep = evaluate_scorer([&](const Example& e, const std::vector<int>& c) { return pop(e, c); },
                             test_set, candidates());
  CHECK(rep.at10.precision == doctest::Approx(1.0));
  CHECK(rep.at10.mrr == doctest::Approx((1.0 + 0.5 + 1.0 / 3.0 + 1.0) / 4.0).epsilon(1e-12));
}

TEST_CASE("report writers emit records and a table") {
  MetricsReport r;
  r.at10 = {0.5, 0.25};
  r.at20 = {0.75, 0.3};
  r.n_examples = 8;
  r.n_singleton_candidates = 1;
  std::ostringstream rec;
  write_report_records(rec, "test", r);
  CHECK(rec.str().find("test 10 precision 0.500000\n") != std::string::npos);
  CHECK(rec.str().find("test 20 mrr 0.300000\n") != std::string::npos);
  CHECK(rec.str().find("test - n_examples 8\n") != std::string::npos);
  CHECK(rec.str().find("test - n_singleton_candidates 1\n") != std::string::npos);

  std::ostringstream tab;
  write_report_table(tab, "test", r);
  CHECK(tab.str().find("test (8 examples, 1 singleton candidate sets)") != std::string::npos);
}
