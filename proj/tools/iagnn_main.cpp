// Command-line front end: every subcommand body lives in the pipeline library
// so tests can drive the identical code paths. Options resolve in layers:
// built-in defaults, then --config file keys, then flags in the order given.
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "iagnn/config.hpp"
#include "iagnn/errors.hpp"
#include "iagnn/pipeline.hpp"

namespace {

using KeyValue = std::pair<std::string, std::string>;

// binds a flag to a RunConfig key; the raw string goes through the same
// validation as a config-file line
void bind_option(CLI::App* cmd, const std::string& flag, std::string key,
                 std::vector<KeyValue>& ops, const std::string& desc) {
  cmd->add_option_function<std::string>(
      flag, [key = std::move(key), &ops](const std::string& v) { ops.emplace_back(key, v); },
      desc);
}

void bind_flag(CLI::App* cmd, const std::string& flag, std::string key,
               std::vector<KeyValue>& ops, const std::string& desc) {
  cmd->add_flag_callback(
      flag, [key = std::move(key), &ops]() { ops.emplace_back(key, "true"); }, desc);
}

iagnn::RunConfig resolve_config(const std::string& config_file,
                                const std::vector<KeyValue>& ops,
                                const std::vector<std::string>& sets) {
  iagnn::RunConfig cfg;
  if (!config_file.empty()) cfg = iagnn::load_config_file(config_file);
  for (const auto& [key, value] : ops) iagnn::apply_config_value(cfg, key, value, "flag " + key);
  for (const std::string& raw : sets) {
    const auto eq = raw.find('=');
    if (eq == std::string::npos)
      throw iagnn::UsageError("--set: expected key=value, got '" + raw + "'");
    iagnn::apply_config_value(cfg, raw.substr(0, eq), raw.substr(eq + 1), "flag --set");
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"category-constrained next-item recommendation on session graphs"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<KeyValue> ops;
  std::vector<std::string> sets;
  std::string checkpoint;
  std::string split = "test";
  std::string grid_spec;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key = value configuration file");
    cmd->add_option("--set", sets, "override any configuration key (key=value, repeatable)");
    bind_option(cmd, "--seed", "seed", ops, "random seed");
    bind_option(cmd, "--workers", "workers", ops, "parallel example workers per batch");
    bind_flag(cmd, "--deterministic", "deterministic", ops, "force fully serial execution");
    return cmd;
  };

  CLI::App* preprocess =
      add_common(app.add_subcommand("preprocess", "raw interaction log -> example files"));
  bind_option(preprocess, "--input", "input", ops,
              "text log: session_id<sep>item_id<sep>category_id<sep>timestamp");
  bind_option(preprocess, "--sep", "sep", ops, "field separator: tab or comma");
  bind_option(preprocess, "--fraction", "fraction", ops,
              "keep only the most recent fraction of sessions");
  bind_option(preprocess, "--out-dir", "out_dir", ops, "output directory");

  CLI::App* train = add_common(app.add_subcommand("train", "fit the model on a data directory"));
  bind_option(train, "--data-dir", "data_dir", ops, "directory from preprocess");
  bind_option(train, "--out-dir", "out_dir", ops, "checkpoint/history/report directory");
  bind_option(train, "--dims", "dims", ops, "embedding width");
  bind_option(train, "--layers", "layers", ops, "message-passing layers");
  bind_option(train, "--lr", "learning_rate", ops, "initial learning rate");
  bind_option(train, "--batch-size", "batch_size", ops, "examples per optimizer step");
  bind_option(train, "--max-epochs", "max_epochs", ops, "epoch budget");
  bind_option(train, "--patience", "patience", ops, "epochs without improvement before stopping");

  CLI::App* evaluate =
      add_common(app.add_subcommand("evaluate", "score a saved checkpoint on one split"));
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file from train");
  evaluate->add_option("--split", split, "train, val, or test");
  bind_option(evaluate, "--data-dir", "data_dir", ops, "directory from preprocess");

  CLI::App* gradcheck = add_common(
      app.add_subcommand("gradcheck", "finite-difference audit of the analytic gradients"));
  bind_option(gradcheck, "--dims", "dims", ops, "embedding width");
  bind_option(gradcheck, "--layers", "layers", ops, "message-passing layers");

  CLI::App* ablate =
      add_common(app.add_subcommand("ablate", "train and compare the model variants"));
  bind_option(ablate, "--data-dir", "data_dir", ops, "directory from preprocess");
  bind_option(ablate, "--out-dir", "out_dir", ops, "where to write ablation.tsv (optional)");
  bind_option(ablate, "--dims", "dims", ops, "embedding width");
  bind_option(ablate, "--max-epochs", "max_epochs", ops, "epoch budget per variant");
  bind_option(ablate, "--subsample", "train_subsample", ops,
              "train each variant on this many examples (0 = all)");

  CLI::App* grid = add_common(app.add_subcommand("grid", "hyperparameter sweep"));
  bind_option(grid, "--data-dir", "data_dir", ops, "directory from preprocess");
  bind_option(grid, "--out-dir", "out_dir", ops, "where to write grid.tsv and depth.tsv");
  grid->add_option("--grid-spec", grid_spec,
                   "axes to sweep, e.g. \"lr=0.001,0.01;decay_step=3;layers=1,2,3\"");
  bind_option(grid, "--subsample", "train_subsample", ops,
              "train each cell on this many examples (0 = all)");
  bind_option(grid, "--dims", "dims", ops, "embedding width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    iagnn::RunConfig cfg = resolve_config(config_file, ops, sets);
    if (preprocess->parsed()) {
      iagnn::cmd_preprocess(cfg, std::cout);
    } else if (train->parsed()) {
      iagnn::cmd_train(cfg, std::cout);
    } else if (evaluate->parsed()) {
      if (checkpoint.empty()) throw iagnn::UsageError("--checkpoint is required");
      iagnn::cmd_evaluate(cfg, checkpoint, split, std::cout);
    } else if (gradcheck->parsed()) {
      if (!iagnn::cmd_gradcheck(cfg, std::cout).passed()) return 3;
    } else if (ablate->parsed()) {
      iagnn::cmd_ablate(cfg, std::cout);
    } else if (grid->parsed()) {
      if (!grid_spec.empty()) iagnn::apply_grid_spec(cfg, grid_spec);
      iagnn::cmd_grid(cfg, std::cout);
    }
    return 0;
  } catch (const iagnn::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const iagnn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const iagnn::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
