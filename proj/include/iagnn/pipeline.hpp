#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "iagnn/config.hpp"
#include "iagnn/data.hpp"
#include "iagnn/evaluator.hpp"
#include "iagnn/gradcheck.hpp"
#include "iagnn/trainer.hpp"

namespace iagnn {

// The subcommand bodies, shared by the command-line tool and the tests.
// Each writes its artifacts under the directories named in the RunConfig and
// logs human-readable progress to `log`.

struct PreprocessSummary {
  CorpusStats parsed;           // after parsing (and the fraction cut)
  CorpusStats kept;             // after filtering to fixpoint
  FilterStats filter;
  std::size_t n_train_examples = 0;
  std::size_t n_val_examples = 0;
  std::size_t n_test_examples = 0;
  std::size_t n_val_oov = 0;   // dropped: out-of-vocabulary ids
  std::size_t n_test_oov = 0;
};

// parse -> fraction cut -> canonicalize categories -> filter to fixpoint ->
// session split -> vocabulary from the training sessions -> augment ->
// index -> write {train,val,test}.examples + vocab.txt + stats.txt
PreprocessSummary cmd_preprocess(const RunConfig& cfg, std::ostream& log);

struct DataBundle {
  std::vector<Example> train, val, test;
  int n_items = 0;
  int n_categories = 0;
  CandidateIndex candidates;
};

DataBundle load_data_dir(const std::string& dir);

struct TrainSummary {
  TrainResult run;
  MetricsReport test;             // best params on the test split
  MetricsReport popularity_test;  // frequency baseline on the same split
  std::string checkpoint_path;
  std::string history_path;
  std::string report_path;
  std::string config_path;  // re-loadable effective configuration
};

// train on data_dir, keep the best-validation parameters, score the test
// split against the popularity baseline, write checkpoint.ckpt, history.tsv,
// report.txt, and config.txt under out_dir
TrainSummary cmd_train(const RunConfig& cfg, std::ostream& log);

// score one split ("train", "val", "test") with a saved checkpoint
MetricsReport cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_path,
                           const std::string& split, std::ostream& log);

// finite-difference check of the analytic gradients on a small built-in
// batch at the configured dims/layers; logs max relative error per tensor
GradCheckReport cmd_gradcheck(const RunConfig& cfg, std::ostream& log);

struct AblationRow {
  std::string name;
  int best_epoch = 0;
  double val_mrr20 = 0.0;
  MetricsReport test;
};

// trains and scores the model variants side by side: the full model, each
// structural removal, and each optional addition; one table row per variant
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, std::ostream& log);
void write_ablation_table(std::ostream& out, const std::vector<AblationRow>& rows);

struct GridSummary {
  std::vector<GridResult> ranked;
  std::string table_path;
  std::string depth_path;
};

// hyperparameter sweep over cfg.grid_cells(); writes grid.tsv and depth.tsv
GridSummary cmd_grid(const RunConfig& cfg, std::ostream& log);

}  // namespace iagnn
