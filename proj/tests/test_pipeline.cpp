// End-to-end command bodies: preprocess hand counts, byte-identical reruns,
// config round-trips, train/evaluate/ablate/grid artifacts, and the exit
// codes of the installed binary.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "iagnn/config.hpp"
#include "iagnn/errors.hpp"
#include "iagnn/pipeline.hpp"
#include "support/synth.hpp"

using namespace iagnn;
namespace fs = std::filesystem;

namespace {

const fs::path kTmp = "pipeline_tmp";

struct TmpDir {
  TmpDir() {
    fs::remove_all(kTmp);
    fs::create_directories(kTmp);
  }
  ~TmpDir() { fs::remove_all(kTmp); }
  std::string operator/(const char* name) const { return (kTmp / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::map<std::string, std::string> read_stats(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::map<std::string, std::string> kv;
  std::string key, value;
  while (in >> key >> value) kv[key] = value;
  return kv;
}

// 12 sessions of items a,b,c (cats x,x,y); sessions 0 and 1 also carry the
// rare item z (cat y) that the occurrence filter must drop
std::string toy_corpus() {
  std::ostringstream out;
  long t = 1000;
  for (int s = 0; s < 12; ++s) {
    out << "s" << s << "\ta\tx\t" << t++ << "\n";
    if (s < 2) out << "s" << s << "\tz\ty\t" << t++ << "\n";
    out << "s" << s << "\tb\tx\t" << t++ << "\n";
    out << "s" << s << "\tc\ty\t" << t++ << "\n";
  }
  return out.str();
}

RunConfig synth_data_config(const TmpDir& tmp, const char* dir_name) {
  testing::SynthConfig sc;
  sc.n_categories = 3;
  sc.items_per_category = 6;
  sc.n_sessions = 600;
  sc.max_len = 6;
  sc.seed = 7;
  std::ostringstream corpus;
  testing::write_synthetic_corpus(corpus, sc);
  RunConfig cfg;
  cfg.input = tmp / "synth.txt";
  write_file(cfg.input, corpus.str());
  cfg.out_dir = tmp / dir_name;
  cfg.seed = 3;
  cfg.dims = 8;
  cfg.layers = 1;
  cfg.batch_size = 64;
  cfg.max_epochs = 2;
  cfg.patience = 2;
  cfg.learning_rate = 0.01;
  std::ostringstream log;
  cmd_preprocess(cfg, log);
  cfg.data_dir = cfg.out_dir;
  return cfg;
}

}  // namespace

TEST_CASE("preprocess statistics match hand counts on a toy fixture") {
  TmpDir tmp;
  RunConfig cfg;
  cfg.input = tmp / "toy.txt";
  write_file(cfg.input, toy_corpus());
  cfg.out_dir = tmp / "toy_out";
  std::ostringstream log;
  const auto summary = cmd_preprocess(cfg, log);

  // parsed: 12 sessions, 12*3+2 events, items {a,b,c,z}, cats {x,y}
  CHECK(summary.parsed.n_sessions == 12);
  CHECK(summary.parsed.n_events == 38);
  CHECK(summary.parsed.n_items == 4);
  CHECK(summary.parsed.n_categories == 2);
  // z appears twice (< 5) -> dropped; every session keeps [a,b,c]
  CHECK(summary.filter.dropped_items == 1);
  CHECK(summary.filter.dropped_sessions == 0);
  CHECK(summary.kept.n_sessions == 12);
  CHECK(summary.kept.n_events == 36);
  CHECK(summary.kept.n_items == 3);
  CHECK(summary.kept.avg_session_len == doctest::Approx(3.0));
  CHECK(summary.kept.avg_categories_per_session == doctest::Approx(2.0));
  // sessions split 10/1/1 (nearest-integer ratios); each contributes
  // len-1 = 2 examples; every session is identical so out-of-vocabulary
  // drops are impossible
  CHECK(summary.n_train_examples == 20);
  CHECK(summary.n_val_examples == 2);
  CHECK(summary.n_test_examples == 2);
  CHECK(summary.n_val_oov == 0);
  CHECK(summary.n_test_oov == 0);

  const auto kv = read_stats(cfg.out_dir + "/stats.txt");
  CHECK(kv.at("kept_sessions") == "12");
  CHECK(kv.at("kept_items") == "3");
  CHECK(kv.at("train_examples") == "20");
  CHECK(kv.at("filter_dropped_items") == "1");
}

TEST_CASE("the fraction flag keeps only the most recent sessions") {
  TmpDir tmp;
  // 40 sessions: the first 30 use items a,b,c; the last 10 use d,e,f
  std::ostringstream corpus;
  long t = 1000;
  for (int s = 0; s < 40; ++s) {
    const char* items = s < 30 ? "abc" : "def";
    for (int e = 0; e < 3; ++e)
      corpus << "s" << s << "\t" << items[e] << "\tx\t" << t++ << "\n";
  }
  RunConfig cfg;
  cfg.input = tmp / "phased.txt";
  write_file(cfg.input, corpus.str());
  cfg.out_dir = tmp / "frac_out";
  cfg.fraction = 0.25;
  std::ostringstream log;
  const auto summary = cmd_preprocess(cfg, log);
  CHECK(summary.parsed.n_sessions == 10);
  CHECK(summary.kept.n_items == 3);  // only d,e,f survive the cut
  const std::string vocab = read_file(cfg.out_dir + "/vocab.txt");
  CHECK(vocab.find(" d ") != std::string::npos);
  CHECK(vocab.find(" a ") == std::string::npos);
}

TEST_CASE("preprocess reruns are byte-identical") {
  TmpDir tmp;
  RunConfig cfg;
  cfg.input = tmp / "toy.txt";
  write_file(cfg.input, toy_corpus());
  std::ostringstream log;
  cfg.out_dir = tmp / "out_a";
  cmd_preprocess(cfg, log);
  cfg.out_dir = tmp / "out_b";
  cmd_preprocess(cfg, log);
  for (const char* name : {"train.examples", "val.examples", "test.examples", "vocab.txt",
                           "stats.txt"})
    CHECK(read_file((kTmp / "out_a" / name).string()) ==
          read_file((kTmp / "out_b" / name).string()));
}

TEST_CASE("configuration files round-trip through the echo") {
  RunConfig cfg;
  cfg.input = "some/log.tsv";
  cfg.sep = ',';
  cfg.fraction = 0.25;
  cfg.data_dir = "data";
  cfg.out_dir = "runs/a";
  cfg.dims = 48;
  cfg.layers = 3;
  cfg.leaky_slope = 0.15;
  cfg.attention_readout = true;
  cfg.bce_loss = true;
  cfg.learning_rate = 0.005;
  cfg.seed = 99;
  cfg.deterministic = true;
  cfg.train_subsample = 1234;
  cfg.grid_learning_rates = {0.001, 0.01};
  cfg.grid_decay_steps = {3};
  cfg.grid_layers = {1, 2, 3};

  std::ostringstream echo;
  write_config(echo, cfg);
  std::istringstream in(echo.str());
  const RunConfig reparsed = parse_config(in, "echo");
  CHECK(reparsed == cfg);
}

TEST_CASE("configuration parsing reports key names and line numbers") {
  std::istringstream unknown("dims = 16\nbogus_key = 3\n");
  try {
    parse_config(unknown, "test.cfg");
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
    CHECK(std::string(e.what()).find("test.cfg:2") != std::string::npos);
  }

  std::istringstream bad_bool("message_sigmoid = maybe\n");
  CHECK_THROWS_AS(parse_config(bad_bool, "x"), UsageError);
  std::istringstream no_eq("dims 16\n");
  CHECK_THROWS_AS(parse_config(no_eq, "x"), UsageError);
  std::istringstream bad_sep("sep = pipe\n");
  CHECK_THROWS_AS(parse_config(bad_sep, "x"), UsageError);

  // comments and blank lines are ignored; later keys override earlier ones
  std::istringstream ok("# header\n\ndims = 16  # inline\ndims = 24\nsep = comma\n");
  const RunConfig cfg = parse_config(ok, "x");
  CHECK(cfg.dims == 24);
  CHECK(cfg.sep == ',');
}

TEST_CASE("grid specs replace single axes") {
  RunConfig cfg;
  apply_grid_spec(cfg, "lr=0.001,0.01;layers=2");
  CHECK(cfg.grid_learning_rates == std::vector<double>{0.001, 0.01});
  CHECK(cfg.grid_layers == std::vector<int>{2});
  CHECK(cfg.grid_decay_steps == std::vector<int>{2, 3, 4});  // untouched axis
  CHECK(cfg.grid_cells().size() == 2 * 3 * 1);
  CHECK_THROWS_AS(apply_grid_spec(cfg, "epochs=5"), UsageError);
  CHECK_THROWS_AS(apply_grid_spec(cfg, "lr 0.1"), UsageError);
}

TEST_CASE("train writes its artifacts and evaluate reproduces the test metrics") {
  TmpDir tmp;
  RunConfig cfg = synth_data_config(tmp, "data");
  cfg.out_dir = tmp / "run";
  std::ostringstream log;
  const TrainSummary s = cmd_train(cfg, log);

  CHECK(fs::exists(s.checkpoint_path));
  CHECK(fs::exists(s.history_path));
  CHECK(fs::exists(s.report_path));
  CHECK(fs::exists(s.config_path));
  CHECK(s.run.history.size() == 2);

  // the persisted effective configuration parses back to the run's config
  std::ifstream cfg_in(s.config_path);
  const RunConfig reparsed = parse_config(cfg_in, s.config_path);
  CHECK(reparsed == cfg);

  // history file has one line per epoch
  const std::string history = read_file(s.history_path);
  CHECK(std::count(history.begin(), history.end(), '\n') == 2);

  // a fresh evaluate of the saved checkpoint agrees with the train-time report
  std::ostringstream eval_log;
  const MetricsReport test = cmd_evaluate(cfg, s.checkpoint_path, "test", eval_log);
  CHECK(test.at20.mrr == s.test.at20.mrr);
  CHECK(test.at10.precision == s.test.at10.precision);
  CHECK(test.n_examples == s.test.n_examples);

  // and is deterministic, down to the bytes of the emitted tables
  std::ostringstream eval_log2;
  cmd_evaluate(cfg, s.checkpoint_path, "test", eval_log2);
  CHECK(eval_log.str() == eval_log2.str());

  CHECK_THROWS_AS(cmd_evaluate(cfg, s.checkpoint_path, "holdout", eval_log), UsageError);
}

TEST_CASE("identical deterministic runs produce byte-identical files") {
  TmpDir tmp;
  RunConfig cfg = synth_data_config(tmp, "data");
  cfg.deterministic = true;
  std::ostringstream log;
  cfg.out_dir = tmp / "run_a";
  cmd_train(cfg, log);
  cfg.out_dir = tmp / "run_b";
  cmd_train(cfg, log);
  for (const char* name : {"history.tsv", "report.txt", "checkpoint.ckpt"})
    CHECK(read_file((kTmp / "run_a" / name).string()) ==
          read_file((kTmp / "run_b" / name).string()));
}

TEST_CASE("gradcheck audits every tensor and passes at the default tolerance") {
  RunConfig cfg;
  cfg.dims = 6;
  cfg.layers = 2;
  std::ostringstream log;
  const auto report = cmd_gradcheck(cfg, log);
  CHECK(report.passed());
  auto params = ModelParams::init(cfg.seed, 6, 3, cfg.model_config());
  CHECK(report.entries.size() == params.all().size());
  CHECK(log.str().find("PASS") != std::string::npos);
}

TEST_CASE("the ablation table carries exactly seven variants") {
  TmpDir tmp;
  RunConfig cfg = synth_data_config(tmp, "data");
  cfg.max_epochs = 1;
  cfg.patience = 1;
  cfg.train_subsample = 150;
  cfg.out_dir = tmp / "ablate_out";
  std::ostringstream log;
  const auto rows = cmd_ablate(cfg, log);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0].name == "full");
  for (const auto& row : rows) CHECK(row.test.n_examples > 0);
  std::set<std::string> names;
  for (const auto& row : rows) names.insert(row.name);
  CHECK(names.size() == 7);

  const std::string table = read_file(cfg.out_dir + "/ablation.tsv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 8);  // header + 7 rows
  CHECK(table.find("no_category_nodes") != std::string::npos);
  CHECK(table.find("positive_position") != std::string::npos);
}

TEST_CASE("the grid command sweeps its cells and writes both tables") {
  TmpDir tmp;
  RunConfig cfg = synth_data_config(tmp, "data");
  cfg.max_epochs = 1;
  cfg.patience = 1;
  cfg.train_subsample = 150;
  cfg.grid_learning_rates = {0.01, 0.001};
  cfg.grid_decay_steps = {3};
  cfg.grid_layers = {1, 2};
  cfg.out_dir = tmp / "grid_out";
  std::ostringstream log;
  const auto summary = cmd_grid(cfg, log);
  CHECK(summary.ranked.size() == 4);
  CHECK(fs::exists(summary.table_path));
  CHECK(fs::exists(summary.depth_path));
  const std::string grid = read_file(summary.table_path);
  CHECK(std::count(grid.begin(), grid.end(), '\n') == 5);  // header + 4 cells
}

TEST_CASE("missing inputs fail with the expected error kinds") {
  RunConfig cfg;
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_preprocess(cfg, log), UsageError);  // no input path
  cfg.input = "does_not_exist.txt";
  cfg.out_dir = "unused";
  CHECK_THROWS_AS(cmd_preprocess(cfg, log), DataError);
  RunConfig train_cfg;
  CHECK_THROWS_AS(cmd_train(train_cfg, log), UsageError);  // no data_dir
  train_cfg.data_dir = "no_such_dir";
  CHECK_THROWS_AS(cmd_train(train_cfg, log), DataError);
}

#ifdef IAGNN_BIN
TEST_CASE("the binary maps error kinds onto its exit codes") {
  auto run = [](const std::string& args) {
    const std::string cmd = std::string(IAGNN_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };
  CHECK(run("gradcheck --dims 4 --layers 1") == 0);
  CHECK(run("") == 1);                                     // missing subcommand
  CHECK(run("train --data-dir") == 1);                     // flag without value
  CHECK(run("train") == 1);                                // data_dir unset
  CHECK(run("train --data-dir no_such_dir --out-dir x") == 2);
  CHECK(run("evaluate --checkpoint nope.ckpt --data-dir nope") == 2);
  CHECK(run("gradcheck --set bogus=1") == 1);              // unknown key
}
#endif
