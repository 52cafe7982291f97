#include "iagnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "iagnn/adam.hpp"
#include "iagnn/errors.hpp"
#include "iagnn/rng.hpp"

namespace iagnn {

namespace {

void check_train_config(const TrainConfig& c) {
  if (c.learning_rate <= 0.0) throw UsageError("learning_rate must be positive");
  if (c.lr_decay_step_epochs < 1) throw UsageError("lr_decay_step_epochs must be >= 1");
  if (c.lr_decay_factor <= 0.0 || c.lr_decay_factor > 1.0)
    throw UsageError("lr_decay_factor must be in (0, 1]");
  if (c.batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (c.max_epochs < 1) throw UsageError("max_epochs must be >= 1");
  if (c.patience < 1) throw UsageError("patience must be >= 1");
  if (c.n_workers < 1) throw UsageError("n_workers must be >= 1");
}

// Forward+backward for examples [begin, end) of the batch order, workers
// taking interleaved chunks; tapes land in their example's slot so the
// reducer can accumulate in example order regardless of worker count.
double run_batch(ModelParams& params, const std::vector<Example>& examples,
                 const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
                 const CandidateIndex& candidates, int n_workers) {
  const std::size_t batch_n = end - begin;
  std::vector<std::unique_ptr<ExampleTape>> tapes(batch_n);
  const std::size_t workers = std::min<std::size_t>(n_workers, batch_n);
  // chunks of `workers` tapes bound memory: build, reduce, release
  for (std::size_t chunk = 0; chunk < batch_n; chunk += workers) {
    const std::size_t chunk_end = std::min(chunk + workers, batch_n);
    if (workers == 1) {
      tapes[chunk] = std::make_unique<ExampleTape>(params, examples[order[begin + chunk]],
                                                   candidates);
      tapes[chunk]->backward();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t i = chunk; i < chunk_end; ++i) {
        pool.emplace_back([&, i] {
          tapes[i] = std::make_unique<ExampleTape>(params, examples[order[begin + i]], candidates);
          tapes[i]->backward();
        });
      }
      for (auto& th : pool) th.join();
    }
    for (std::size_t i = chunk; i < chunk_end; ++i) tapes[i]->accumulate(1.0 / batch_n);
  }
  double loss = 0.0;
  for (const auto& tape : tapes) loss += tape->result().loss;
  return loss;
}

}  // namespace

TrainResult train(ModelParams params, const std::vector<Example>& train_set,
                  const std::vector<Example>& val_set, const CandidateIndex& candidates,
                  const TrainConfig& config, std::ostream* progress) {
  check_train_config(config);
  if (train_set.empty()) throw DataError("train: empty training set");
  if (val_set.empty()) throw DataError("train: empty validation set");

  Adam optimizer(params.all());
  Rng rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  int epochs_since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = config.learning_rate *
                      std::pow(config.lr_decay_factor, (epoch - 1) / config.lr_decay_step_epochs);
    shuffle(order, rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, order.size());
      params.zero_grad();
      loss_sum += run_batch(params, train_set, order, begin, end, candidates, config.n_workers);
      optimizer.step(lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / train_set.size();
    rec.val = evaluate(params, val_set, candidates);
    result.history.push_back(rec);
    if (progress) {
      std::ostringstream line;
      write_history(line, {rec});
      *progress << line.str() << std::flush;
    }

    if (rec.val.at20.mrr > result.best_val_mrr20 || result.best_epoch < 0) {
      result.best_val_mrr20 = rec.val.at20.mrr;
      result.best_epoch = epoch;
      result.best_params = params;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= config.patience) {
      break;
    }
  }
  return result;
}

void write_history(std::ostream& out, const std::vector<EpochRecord>& history) {
  for (const EpochRecord& r : history) {
    out << r.epoch << "\t" << std::setprecision(10) << std::defaultfloat << r.lr << "\t"
        << std::fixed << std::setprecision(6) << r.train_loss << "\t" << r.val.at10.precision
        << "\t" << r.val.at20.precision << "\t" << r.val.at10.mrr << "\t" << r.val.at20.mrr
        << "\n";
    out.unsetf(std::ios::fixed);
  }
}

void write_history_file(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw DataError("write_history: cannot open " + path);
  write_history(out, history);
  if (!out) throw DataError("write_history: write failure on " + path);
}

std::vector<GridResult> grid_search(const std::vector<GridCell>& grid,
                                    const ModelConfig& base_model, std::uint64_t init_seed,
                                    int n_items, int n_categories,
                                    const std::vector<Example>& train_set,
                                    const std::vector<Example>& val_set,
                                    const CandidateIndex& candidates, const TrainConfig& base,
                                    std::size_t train_subsample, std::ostream* progress) {
  if (grid.empty()) throw UsageError("grid_search: empty grid");

  std::vector<Example> subsample;
  const std::vector<Example>* cell_train = &train_set;
  if (train_subsample > 0 && train_subsample < train_set.size()) {
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(base.seed);
    shuffle(order, rng);
    subsample.reserve(train_subsample);
    for (std::size_t i = 0; i < train_subsample; ++i) subsample.push_back(train_set[order[i]]);
    cell_train = &subsample;
  }

  std::vector<GridResult> results;
  for (const GridCell& cell : grid) {
    ModelConfig mc = base_model;
    mc.layers = cell.layers;
    TrainConfig tc = base;
    tc.learning_rate = cell.learning_rate;
    tc.lr_decay_step_epochs = cell.lr_decay_step_epochs;
    if (progress)
      *progress << "grid cell lr=" << cell.learning_rate << " decay_step="
                << cell.lr_decay_step_epochs << " layers=" << cell.layers << "\n";
    auto params = ModelParams::init(init_seed, n_items, n_categories, mc);
    auto run = train(std::move(params), *cell_train, val_set, candidates, tc, progress);
    GridResult gr;
    gr.cell = cell;
    gr.best_epoch = run.best_epoch;
    gr.val_mrr20 = run.best_val_mrr20;
    gr.val = run.history[run.best_epoch - 1].val;
    results.push_back(std::move(gr));
  }
  std::stable_sort(results.begin(), results.end(),
                   [](const GridResult& a, const GridResult& b) { return a.val_mrr20 > b.val_mrr20; });
  return results;
}

void write_grid_table(std::ostream& out, const std::vector<GridResult>& results) {
  out << "lr\tdecay_step\tlayers\tbest_epoch\tval_P@10\tval_P@20\tval_mrr@10\tval_mrr@20\n";
  for (const GridResult& r : results) {
    out << std::defaultfloat << std::setprecision(10) << r.cell.learning_rate << "\t"
        << r.cell.lr_decay_step_epochs << "\t" << r.cell.layers << "\t" << r.best_epoch << "\t"
        << std::fixed << std::setprecision(6) << r.val.at10.precision << "\t"
        << r.val.at20.precision << "\t" << r.val.at10.mrr << "\t" << r.val.at20.mrr << "\n";
    out.unsetf(std::ios::fixed);
  }
}

void write_depth_curve(std::ostream& out, const std::vector<GridResult>& results) {
  if (results.empty()) return;
  // depth trend at the winning (lr, decay) pair
  const GridCell& best = results.front().cell;
  std::vector<const GridResult*> curve;
  for (const GridResult& r : results)
    if (r.cell.learning_rate == best.learning_rate &&
        r.cell.lr_decay_step_epochs == best.lr_decay_step_epochs)
      curve.push_back(&r);
  std::sort(curve.begin(), curve.end(),
            [](const GridResult* a, const GridResult* b) { return a->cell.layers < b->cell.layers; });
  out << "layers\tval_mrr@20\n";
  for (const GridResult* r : curve)
    out << r->cell.layers << "\t" << std::fixed << std::setprecision(6) << r->val_mrr20 << "\n";
  out.unsetf(std::ios::fixed);
}

}  // namespace iagnn
