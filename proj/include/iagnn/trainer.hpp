#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "iagnn/evaluator.hpp"
#include "iagnn/model.hpp"

namespace iagnn {

struct TrainConfig {
  double learning_rate = 0.01;
  int lr_decay_step_epochs = 3;   // shrink lr every this many epochs
  double lr_decay_factor = 0.1;
  int batch_size = 256;
  int max_epochs = 30;
  int patience = 3;               // epochs without a val mrr@20 improvement
  std::uint64_t seed = 42;        // batch shuffling
  int n_workers = 1;              // example-parallel forward/backward per batch
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  MetricsReport val;
};

struct TrainResult {
  ModelParams best_params;
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_mrr20 = 0.0;
};

// Mini-batch Adam with step-decayed learning rate and early stopping on
// validation mrr@20. Deterministic for a fixed seed and any worker count:
// per-example gradients are reduced in example order and the parameter
// update is a single-threaded section per batch.
TrainResult train(ModelParams params, const std::vector<Example>& train_set,
                  const std::vector<Example>& val_set, const CandidateIndex& candidates,
                  const TrainConfig& config, std::ostream* progress = nullptr);

// one tab-separated line per epoch:
// epoch lr train_loss val_P@10 val_P@20 val_mrr@10 val_mrr@20
void write_history(std::ostream& out, const std::vector<EpochRecord>& history);
void write_history_file(const std::string& path, const std::vector<EpochRecord>& history);

struct GridCell {
  double learning_rate = 0.01;
  int lr_decay_step_epochs = 3;
  int layers = 1;
  bool operator==(const GridCell&) const = default;
};

struct GridResult {
  GridCell cell;
  int best_epoch = -1;
  double val_mrr20 = 0.0;
  MetricsReport val;  // at the best epoch
};

// Trains one model per grid cell (optionally on the first train_subsample
// examples of a seeded shuffle) and ranks cells by validation mrr@20,
// best first; ties keep grid order.
std::vector<GridResult> grid_search(const std::vector<GridCell>& grid,
                                    const ModelConfig& base_model, std::uint64_t init_seed,
                                    int n_items, int n_categories,
                                    const std::vector<Example>& train_set,
                                    const std::vector<Example>& val_set,
                                    const CandidateIndex& candidates, const TrainConfig& base,
                                    std::size_t train_subsample = 0,
                                    std::ostream* progress = nullptr);

// `layers metric` table rows over cells that share the best (lr, decay) pair
void write_depth_curve(std::ostream& out, const std::vector<GridResult>& results);
void write_grid_table(std::ostream& out, const std::vector<GridResult>& results);

}  // namespace iagnn
