#include "iagnn/evaluator.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "iagnn/errors.hpp"

namespace iagnn {

namespace {

// 1-based rank of the label; equal scores rank the smaller index first
int production_rank(const std::vector<double>& scores, int label_pos) {
  const double s = scores[label_pos];
  int rank = 1;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i) {
    if (scores[i] > s || (scores[i] == s && i < label_pos)) ++rank;
  }
  return rank;
}

}  // namespace

RankResult rank_and_score(const std::vector<double>& scores, int label_pos, int k) {
  if (k <= 0) throw UsageError("rank_and_score: k must be positive, got " + std::to_string(k));
  if (label_pos < 0 || label_pos >= static_cast<int>(scores.size()))
    throw DataError("rank_and_score: label position " + std::to_string(label_pos) + " out of " +
                    std::to_string(scores.size()));
  const int rank = production_rank(scores, label_pos);
  RankResult r;
  if (rank <= k) {
    r.hit = 1;
    r.reciprocal_rank = 1.0 / rank;
  }
  return r;
}

double MetricsReport::precision(int k) const {
  if (k == 10) return at10.precision;
  if (k == 20) return at20.precision;
  throw UsageError("report carries k in {10, 20}, asked for " + std::to_string(k));
}

double MetricsReport::mrr(int k) const {
  if (k == 10) return at10.mrr;
  if (k == 20) return at20.mrr;
  throw UsageError("report carries k in {10, 20}, asked for " + std::to_string(k));
}

namespace {

std::vector<int> candidate_list(const Example& ex, const CandidateIndex& candidates) {
  if (ex.target_category < 0 ||
      ex.target_category >= static_cast<int>(candidates.by_category.size()))
    throw DataError("evaluate: target category " + std::to_string(ex.target_category) +
                    " outside the candidate index");
  return candidates.by_category[ex.target_category];
}

int label_position(const std::vector<int>& cand, int label) {
  const auto it = std::lower_bound(cand.begin(), cand.end(), label);
  if (it == cand.end() || *it != label)
    throw DataError("evaluate: label item " + std::to_string(label) +
                    " missing from its candidate set");
  return static_cast<int>(it - cand.begin());
}

// independent check: fully sort (score desc, index asc) and locate the label
int brute_force_rank(const std::vector<double>& scores, int label_pos) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  for (int r = 0; r < static_cast<int>(order.size()); ++r)
    if (order[r] == label_pos) return r + 1;
  return -1;
}

}  // namespace

MetricsReport evaluate_scorer(const Scorer& scorer, const std::vector<Example>& examples,
                              const CandidateIndex& candidates) {
  if (examples.empty()) throw DataError("evaluate: empty example set");
  MetricsReport report;
  report.n_examples = examples.size();
  for (const Example& ex : examples) {
    const auto cand = candidate_list(ex, candidates);
    if (cand.empty())
      throw DataError("evaluate: empty candidate set for category " +
                      std::to_string(ex.target_category));
    if (cand.size() == 1) ++report.n_singleton_candidates;
    const auto scores = scorer(ex, cand);
    const int label_pos = label_position(cand, ex.label_item);
    const auto r10 = rank_and_score(scores, label_pos, 10);
    const auto r20 = rank_and_score(scores, label_pos, 20);
    report.at10.precision += r10.hit;
    report.at10.mrr += r10.reciprocal_rank;
    report.at20.precision += r20.hit;
    report.at20.mrr += r20.reciprocal_rank;
  }
  const double n = static_cast<double>(report.n_examples);
  report.at10.precision /= n;
  report.at10.mrr /= n;
  report.at20.precision /= n;
  report.at20.mrr /= n;
  return report;
}

MetricsReport evaluate(ModelParams& params, const std::vector<Example>& examples,
                       const CandidateIndex& candidates, int oracle_stride) {
  if (oracle_stride <= 0) throw UsageError("evaluate: oracle_stride must be positive");
  std::size_t index = 0;
  auto scorer = [&](const Example& ex, const std::vector<int>& cand) {
    auto result = forward(params, ex, candidates);
    if (result.candidates != cand)
      throw NumericError("evaluate: model scored a different candidate list");
    if (index++ % oracle_stride == 0) {
      // brute-force re-ranking must agree with the incremental rank rule
      const int oracle = brute_force_rank(result.scores, result.label_pos);
      const int production = production_rank(result.scores, result.label_pos);
      if (oracle != production)
        throw NumericError("evaluate: rank oracle mismatch (" + std::to_string(oracle) + " vs " +
                           std::to_string(production) + ") on example " +
                           std::to_string(index - 1));
    }
    return result.scores;
  };
  return evaluate_scorer(scorer, examples, candidates);
}

PopularityBaseline PopularityBaseline::build(const std::vector<Example>& train_examples,
                                             int n_items) {
  PopularityBaseline b;
  b.frequency.assign(n_items, 0.0);
  for (const Example& ex : train_examples) {
    if (ex.label_item < 0 || ex.label_item >= n_items)
      throw DataError("popularity_baseline: label " + std::to_string(ex.label_item) +
                      " outside [0, " + std::to_string(n_items) + ")");
    b.frequency[ex.label_item] += 1.0;
  }
  return b;
}

std::vector<double> PopularityBaseline::operator()(const Example&,
                                                   const std::vector<int>& candidates) const {
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) scores[i] = frequency[candidates[i]];
  return scores;
}

void write_report_records(std::ostream& out, const std::string& split, const MetricsReport& r) {
  out << std::setprecision(6) << std::fixed;
  out << split << " 10 precision " << r.at10.precision << "\n";
  out << split << " 10 mrr " << r.at10.mrr << "\n";
  out << split << " 20 precision " << r.at20.precision << "\n";
  out << split << " 20 mrr " << r.at20.mrr << "\n";
  out << split << " - n_examples " << r.n_examples << "\n";
  out << split << " - n_singleton_candidates " << r.n_singleton_candidates << "\n";
  out.unsetf(std::ios::fixed);
}

void write_report_table(std::ostream& out, const std::string& split, const MetricsReport& r) {
  out << std::setprecision(4) << std::fixed;
  out << split << " (" << r.n_examples << " examples, " << r.n_singleton_candidates
      << " singleton candidate sets)\n";
  out << "  k    precision  mrr\n";
  out << "  10   " << std::setw(9) << r.at10.precision << "  " << std::setw(6) << r.at10.mrr
      << "\n";
  out << "  20   " << std::setw(9) << r.at20.precision << "  " << std::setw(6) << r.at20.mrr
      << "\n";
  out.unsetf(std::ios::fixed);
}

}  // namespace iagnn
