#include "iagnn/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "iagnn/errors.hpp"
#include "iagnn/rng.hpp"

namespace fs = std::filesystem;

namespace iagnn {

namespace {

std::string joined(const std::string& dir, const char* file) {
  return (fs::path(dir) / file).string();
}

void ensure_dir(const std::string& dir, const char* flag) {
  if (dir.empty()) throw UsageError(std::string(flag) + " is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

void log_stats(std::ostream& log, const char* label, const CorpusStats& s) {
  log << label << ": " << s.n_sessions << " sessions, " << s.n_events << " events, "
      << s.n_items << " items, " << s.n_categories << " categories, avg length "
      << std::fixed << std::setprecision(2) << s.avg_session_len << ", avg categories/session "
      << s.avg_categories_per_session << "\n";
  log.unsetf(std::ios::fixed);
}

void write_stats_file(const std::string& path, const PreprocessSummary& s) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path);
  out << "parsed_sessions " << s.parsed.n_sessions << "\n";
  out << "parsed_events " << s.parsed.n_events << "\n";
  out << "parsed_items " << s.parsed.n_items << "\n";
  out << "parsed_categories " << s.parsed.n_categories << "\n";
  out << "kept_sessions " << s.kept.n_sessions << "\n";
  out << "kept_events " << s.kept.n_events << "\n";
  out << "kept_items " << s.kept.n_items << "\n";
  out << "kept_categories " << s.kept.n_categories << "\n";
  out << std::fixed << std::setprecision(4);
  out << "kept_avg_session_len " << s.kept.avg_session_len << "\n";
  out << "kept_avg_categories_per_session " << s.kept.avg_categories_per_session << "\n";
  out.unsetf(std::ios::fixed);
  out << "filter_dropped_items " << s.filter.dropped_items << "\n";
  out << "filter_dropped_sessions " << s.filter.dropped_sessions << "\n";
  out << "filter_rounds " << s.filter.rounds << "\n";
  out << "category_conflicts " << s.filter.category_conflicts << "\n";
  out << "train_examples " << s.n_train_examples << "\n";
  out << "val_examples " << s.n_val_examples << "\n";
  out << "test_examples " << s.n_test_examples << "\n";
  out << "val_oov_dropped " << s.n_val_oov << "\n";
  out << "test_oov_dropped " << s.n_test_oov << "\n";
  if (!out) throw DataError("write failure on " + path);
}

// first `n` of a seeded shuffle, matching the grid-search subsample rule
std::vector<Example> subsample_examples(const std::vector<Example>& all, std::size_t n,
                                        std::uint64_t seed) {
  if (n == 0 || n >= all.size()) return all;
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(all[order[i]]);
  return out;
}

}  // namespace

PreprocessSummary cmd_preprocess(const RunConfig& cfg, std::ostream& log) {
  if (cfg.input.empty()) throw UsageError("input is required");
  std::ifstream in(cfg.input);
  if (!in) throw DataError("cannot open " + cfg.input);
  ensure_dir(cfg.out_dir, "out_dir");

  ParseResult parsed = parse_interactions(in, cfg.sep);
  if (parsed.malformed > 0)
    log << "skipped " << parsed.malformed << " of " << parsed.total_lines << " lines\n";
  auto sessions = std::move(parsed.sessions);
  if (cfg.fraction < 1.0) sessions = keep_recent_fraction(std::move(sessions), cfg.fraction);

  PreprocessSummary summary;
  summary.parsed = corpus_stats(sessions);
  log_stats(log, "parsed", summary.parsed);

  canonicalize_categories(sessions, &summary.filter);
  sessions = filter_to_fixpoint(std::move(sessions), cfg.min_occurrence, cfg.min_session_len,
                                &summary.filter);
  summary.kept = corpus_stats(sessions);
  log_stats(log, "kept", summary.kept);
  log << "filter: dropped " << summary.filter.dropped_items << " items, "
      << summary.filter.dropped_sessions << " sessions in " << summary.filter.rounds
      << " rounds; " << summary.filter.category_conflicts << " category conflicts\n";

  const SplitIndices split = split_sessions(sessions.size(), {8, 1, 1}, cfg.seed);
  const Vocabulary vocab = Vocabulary::build(sessions, split.train);

  std::vector<int> split_of(sessions.size(), -1);
  for (auto i : split.train) split_of[i] = 0;
  for (auto i : split.val) split_of[i] = 1;
  for (auto i : split.test) split_of[i] = 2;

  const auto augmented = augment_sessions(sessions, cfg.max_prefix_len);
  std::array<std::vector<StringExample>, 3> by_split;
  for (const auto& ex : augmented) by_split[split_of[ex.session_index]].push_back(ex);

  const IndexResult train = index_examples(by_split[0], vocab);
  const IndexResult val = index_examples(by_split[1], vocab);
  const IndexResult test = index_examples(by_split[2], vocab);
  if (train.dropped_oov != 0)
    throw DataError("preprocess: training examples fell outside their own vocabulary");

  summary.n_train_examples = train.examples.size();
  summary.n_val_examples = val.examples.size();
  summary.n_test_examples = test.examples.size();
  summary.n_val_oov = val.dropped_oov;
  summary.n_test_oov = test.dropped_oov;

  const int n_items = static_cast<int>(vocab.items.size());
  const int n_categories = static_cast<int>(vocab.categories.size());
  write_examples(joined(cfg.out_dir, "train.examples"), train.examples, n_items, n_categories);
  write_examples(joined(cfg.out_dir, "val.examples"), val.examples, n_items, n_categories);
  write_examples(joined(cfg.out_dir, "test.examples"), test.examples, n_items, n_categories);
  write_vocabulary(joined(cfg.out_dir, "vocab.txt"), vocab);
  write_stats_file(joined(cfg.out_dir, "stats.txt"), summary);

  log << "split sessions " << split.train.size() << "/" << split.val.size() << "/"
      << split.test.size() << "; examples " << summary.n_train_examples << "/"
      << summary.n_val_examples << "/" << summary.n_test_examples << " (oov dropped "
      << summary.n_val_oov << " val, " << summary.n_test_oov << " test)\n";
  log << "wrote " << cfg.out_dir << "/{train,val,test}.examples, vocab.txt, stats.txt\n";
  return summary;
}

DataBundle load_data_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("data_dir is required");
  DataBundle b;
  int items2 = 0, items3 = 0, cats2 = 0, cats3 = 0;
  b.train = read_examples(joined(dir, "train.examples"), &b.n_items, &b.n_categories);
  b.val = read_examples(joined(dir, "val.examples"), &items2, &cats2);
  b.test = read_examples(joined(dir, "test.examples"), &items3, &cats3);
  if (items2 != b.n_items || items3 != b.n_items || cats2 != b.n_categories ||
      cats3 != b.n_categories)
    throw DataError("data_dir splits disagree on vocabulary size in " + dir);
  const Vocabulary vocab = read_vocabulary(joined(dir, "vocab.txt"));
  if (static_cast<int>(vocab.items.size()) != b.n_items ||
      static_cast<int>(vocab.categories.size()) != b.n_categories)
    throw DataError("vocab.txt does not match the example files in " + dir);
  b.candidates = CandidateIndex::from(vocab);
  return b;
}

TrainSummary cmd_train(const RunConfig& cfg, std::ostream& log) {
  DataBundle bundle = load_data_dir(cfg.data_dir);
  ensure_dir(cfg.out_dir, "out_dir");

  TrainSummary s;
  s.config_path = joined(cfg.out_dir, "config.txt");
  {
    std::ofstream out(s.config_path);
    if (!out) throw DataError("cannot open " + s.config_path);
    write_config(out, cfg);
  }
  write_config(log, cfg);

  auto params =
      ModelParams::init(cfg.seed, bundle.n_items, bundle.n_categories, cfg.model_config());
  log << "model: " << bundle.n_items << " items, " << bundle.n_categories << " categories, "
      << params.parameter_count() << " parameters\n";
  log << "examples: train " << bundle.train.size() << ", val " << bundle.val.size()
      << ", test " << bundle.test.size() << "\n";

  s.run = train(std::move(params), bundle.train, bundle.val, bundle.candidates,
                cfg.train_config(), &log);
  log << "best epoch " << s.run.best_epoch << " val mrr@20 " << std::fixed
      << std::setprecision(6) << s.run.best_val_mrr20 << "\n";
  log.unsetf(std::ios::fixed);

  s.test = evaluate(s.run.best_params, bundle.test, bundle.candidates);
  const auto baseline = PopularityBaseline::build(bundle.train, bundle.n_items);
  s.popularity_test = evaluate_scorer(baseline, bundle.test, bundle.candidates);

  s.checkpoint_path = joined(cfg.out_dir, "checkpoint.ckpt");
  s.history_path = joined(cfg.out_dir, "history.tsv");
  s.report_path = joined(cfg.out_dir, "report.txt");
  save_checkpoint(s.checkpoint_path, s.run.best_params);
  write_history_file(s.history_path, s.run.history);
  {
    std::ofstream out(s.report_path);
    if (!out) throw DataError("cannot open " + s.report_path);
    write_report_records(out, "val", s.run.history[s.run.best_epoch - 1].val);
    write_report_records(out, "test", s.test);
    write_report_records(out, "popularity_test", s.popularity_test);
    if (!out) throw DataError("write failure on " + s.report_path);
  }

  write_report_table(log, "test", s.test);
  write_report_table(log, "popularity_test", s.popularity_test);
  return s;
}

MetricsReport cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_path,
                           const std::string& split, std::ostream& log) {
  auto params = load_checkpoint(checkpoint_path);
  DataBundle bundle = load_data_dir(cfg.data_dir);
  if (params.n_items != bundle.n_items || params.n_categories != bundle.n_categories)
    throw DataError("checkpoint vocabulary (" + std::to_string(params.n_items) + " items) does "
                    "not match data_dir (" + std::to_string(bundle.n_items) + " items)");

  const std::vector<Example>* examples = nullptr;
  if (split == "train")
    examples = &bundle.train;
  else if (split == "val")
    examples = &bundle.val;
  else if (split == "test")
    examples = &bundle.test;
  else
    throw UsageError("split must be train, val, or test (got '" + split + "')");

  const MetricsReport report = evaluate(params, *examples, bundle.candidates);
  write_report_records(log, split, report);
  write_report_table(log, split, report);
  return report;
}

GradCheckReport cmd_gradcheck(const RunConfig& cfg, std::ostream& log) {
  // a fixed three-example batch over six items in three categories, with a
  // repeated item and a cross-category prefix to reach every code path
  const std::vector<int> item_cat = {0, 0, 1, 1, 2, 2};
  const auto candidates = CandidateIndex::from_item_categories(item_cat, 3);
  std::vector<Example> batch(3);
  batch[0].prefix_items = {0, 2};
  batch[0].prefix_categories = {0, 1};
  batch[0].target_category = 0;
  batch[0].label_item = 1;
  batch[1].prefix_items = {1, 3, 4};
  batch[1].prefix_categories = {0, 1, 2};
  batch[1].target_category = 1;
  batch[1].label_item = 2;
  batch[2].prefix_items = {5, 5, 0};
  batch[2].prefix_categories = {2, 2, 0};
  batch[2].target_category = 2;
  batch[2].label_item = 4;

  auto params = ModelParams::init(cfg.seed, 6, 3, cfg.model_config());
  const double inv = 1.0 / static_cast<double>(batch.size());
  auto loss_fn = [&]() {
    double loss = 0.0;
    for (const auto& ex : batch) loss += forward(params, ex, candidates).loss;
    return loss * inv;
  };
  auto grad_fn = [&]() {
    params.zero_grad();
    for (const auto& ex : batch) {
      ExampleTape tape(params, ex, candidates);
      tape.backward();
      tape.accumulate(inv);
    }
  };

  const auto report = finite_difference_check(loss_fn, grad_fn, params.all(), 1e-5, 1e-4, 64,
                                              cfg.seed);
  log << report.summary();
  log << (report.passed() ? "PASS" : "FAIL") << ": max relative error "
      << report.max_rel_err() << " (tolerance " << report.tol_rel << ")\n";
  return report;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, std::ostream& log) {
  DataBundle bundle = load_data_dir(cfg.data_dir);
  const auto train_set = subsample_examples(bundle.train, cfg.train_subsample, cfg.seed);

  struct Variant {
    const char* name;
    void (*mutate)(ModelConfig&);
  };
  const Variant variants[] = {
      {"full", [](ModelConfig&) {}},
      {"no_category_nodes", [](ModelConfig& m) { m.no_category_nodes = true; }},
      {"target_meanpool", [](ModelConfig& m) { m.target_meanpool = true; }},
      {"no_category_transition", [](ModelConfig& m) { m.no_category_transition = true; }},
      {"add_original_item_transition",
       [](ModelConfig& m) { m.add_original_item_transition = true; }},
      {"attention_readout", [](ModelConfig& m) { m.attention_readout = true; }},
      {"positive_position", [](ModelConfig& m) { m.positive_position = true; }},
  };

  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    ModelConfig mc = cfg.model_config();
    v.mutate(mc);
    log << "variant " << v.name << "\n";
    auto params = ModelParams::init(cfg.seed, bundle.n_items, bundle.n_categories, mc);
    auto run = train(std::move(params), train_set, bundle.val, bundle.candidates,
                     cfg.train_config(), &log);
    AblationRow row;
    row.name = v.name;
    row.best_epoch = run.best_epoch;
    row.val_mrr20 = run.best_val_mrr20;
    row.test = evaluate(run.best_params, bundle.test, bundle.candidates);
    rows.push_back(std::move(row));
  }

  if (!cfg.out_dir.empty()) {
    ensure_dir(cfg.out_dir, "out_dir");
    std::ofstream out(joined(cfg.out_dir, "ablation.tsv"));
    if (!out) throw DataError("cannot open " + joined(cfg.out_dir, "ablation.tsv"));
    write_ablation_table(out, rows);
  }
  write_ablation_table(log, rows);
  return rows;
}

void write_ablation_table(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "variant\tbest_epoch\tval_mrr@20\ttest_P@10\ttest_P@20\ttest_mrr@10\ttest_mrr@20\n";
  for (const AblationRow& r : rows) {
    out << r.name << "\t" << r.best_epoch << "\t" << std::fixed << std::setprecision(6)
        << r.val_mrr20 << "\t" << r.test.at10.precision << "\t" << r.test.at20.precision << "\t"
        << r.test.at10.mrr << "\t" << r.test.at20.mrr << "\n";
    out.unsetf(std::ios::fixed);
  }
}

GridSummary cmd_grid(const RunConfig& cfg, std::ostream& log) {
  DataBundle bundle = load_data_dir(cfg.data_dir);
  ensure_dir(cfg.out_dir, "out_dir");

  GridSummary s;
  s.ranked = grid_search(cfg.grid_cells(), cfg.model_config(), cfg.seed, bundle.n_items,
                         bundle.n_categories, bundle.train, bundle.val, bundle.candidates,
                         cfg.train_config(), cfg.train_subsample, &log);

  s.table_path = joined(cfg.out_dir, "grid.tsv");
  s.depth_path = joined(cfg.out_dir, "depth.tsv");
  {
    std::ofstream out(s.table_path);
    if (!out) throw DataError("cannot open " + s.table_path);
    write_grid_table(out, s.ranked);
  }
  {
    std::ofstream out(s.depth_path);
    if (!out) throw DataError("cannot open " + s.depth_path);
    write_depth_curve(out, s.ranked);
  }
  write_grid_table(log, s.ranked);
  write_depth_curve(log, s.ranked);
  return s;
}

}  // namespace iagnn
