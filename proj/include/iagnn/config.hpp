#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "iagnn/model.hpp"
#include "iagnn/trainer.hpp"

namespace iagnn {

// Every run option in one flat bag: file keys and command-line flags share
// these names, flags override file values, and the effective configuration is
// echoed in a form that parses back to the identical struct.
struct RunConfig {
  // data
  std::string input;  // raw interaction log (preprocess)
  char sep = '\t';
  double fraction = 1.0;  // keep the most recent fraction of sessions
  int min_occurrence = 5;
  int min_session_len = 3;
  int max_prefix_len = 50;
  std::string data_dir;  // preprocessed examples + vocabulary
  std::string out_dir;   // run outputs (checkpoint, history, reports)

  // model
  int dims = 128;
  int layers = 1;
  double leaky_slope = 0.2;
  bool message_sigmoid = true;
  bool share_relation_params = false;
  bool softmax_over_all_items = false;
  bool bce_loss = false;
  bool no_category_nodes = false;
  bool target_meanpool = false;
  bool no_category_transition = false;
  bool add_original_item_transition = false;
  bool attention_readout = false;
  bool positive_position = false;

  // training
  double learning_rate = 0.01;
  int lr_decay_step_epochs = 3;
  double lr_decay_factor = 0.1;
  int batch_size = 256;
  int max_epochs = 30;
  int patience = 3;
  std::uint64_t seed = 42;
  int workers = 1;
  bool deterministic = false;  // force fully serial execution
  std::uint64_t train_subsample = 0;  // grid cells train on this many examples (0 = all)

  // grid
  std::vector<double> grid_learning_rates = {0.001, 0.005, 0.01, 0.05, 0.1};
  std::vector<int> grid_decay_steps = {2, 3, 4};
  std::vector<int> grid_layers = {1, 2, 3, 4, 5};

  bool operator==(const RunConfig&) const = default;

  ModelConfig model_config() const;
  TrainConfig train_config() const;
  std::vector<GridCell> grid_cells() const;
};

// Set one key; unknown keys and unparseable values raise UsageError naming
// the key. `origin` prefixes error messages (file:line or "flag").
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value,
                        const std::string& origin);

// `key = value` lines over `defaults`; '#' starts a comment; blank lines skipped.
RunConfig parse_config(std::istream& in, const std::string& origin, RunConfig defaults = {});
RunConfig load_config_file(const std::string& path, RunConfig defaults = {});

// Echo every key in fixed order; parse_config on the output reproduces cfg.
void write_config(std::ostream& out, const RunConfig& cfg);

// One-flag grid override: "lr=0.001,0.01;decay_step=3;layers=1,2,3"
// (each clause optional and replacing that axis).
void apply_grid_spec(RunConfig& cfg, const std::string& spec);

}  // namespace iagnn
