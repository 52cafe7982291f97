#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "iagnn/model.hpp"

namespace iagnn {

struct RankResult {
  int hit = 0;                   // 1 iff the label lands in the top k
  double reciprocal_rank = 0.0;  // 1/rank when hit, else 0
};

// scores are aligned with an ascending candidate list; ties rank the smaller
// item index first
RankResult rank_and_score(const std::vector<double>& scores, int label_pos, int k);

struct MetricsAtK {
  double precision = 0.0;
  double mrr = 0.0;
};

struct MetricsReport {
  MetricsAtK at10, at20;
  std::size_t n_examples = 0;
  std::size_t n_singleton_candidates = 0;  // scored a guaranteed hit

  double precision(int k) const;
  double mrr(int k) const;
};

// scores one example's candidate list; candidates are ascending item indices
using Scorer =
    std::function<std::vector<double>(const Example&, const std::vector<int>& candidates)>;

MetricsReport evaluate_scorer(const Scorer& scorer, const std::vector<Example>& examples,
                              const CandidateIndex& candidates);

// Model evaluation. Every (1/oracle_stride)-th example is re-ranked by an
// independent brute-force sort and must agree with the production ranking.
MetricsReport evaluate(ModelParams& params, const std::vector<Example>& examples,
                       const CandidateIndex& candidates, int oracle_stride = 100);

// Sanity yardstick: score candidates by training-set label frequency.
struct PopularityBaseline {
  std::vector<double> frequency;  // per item index

  static PopularityBaseline build(const std::vector<Example>& train_examples, int n_items);
  std::vector<double> operator()(const Example& ex, const std::vector<int>& candidates) const;
};

// line-delimited records `split k metric value`; counts carry k = "-"
void write_report_records(std::ostream& out, const std::string& split, const MetricsReport& r);
// human-readable aligned table
void write_report_table(std::ostream& out, const std::string& split, const MetricsReport& r);

}  // namespace iagnn
