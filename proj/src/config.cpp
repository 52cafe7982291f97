#include "iagnn/config.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include "iagnn/errors.hpp"

namespace iagnn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& origin, const std::string& key,
                            const std::string& value, const std::string& expected) {
  throw UsageError(origin + ": key '" + key + "': cannot read '" + value + "' (" + expected + ")");
}

double to_double(const std::string& origin, const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    bad_value(origin, key, v, "expected a number");
  return out;
}

long long to_int(const std::string& origin, const std::string& key, const std::string& v) {
  long long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    bad_value(origin, key, v, "expected an integer");
  return out;
}

bool to_bool(const std::string& origin, const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(origin, key, v, "expected true or false");
}

std::vector<std::string> split_csv(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, ',')) parts.push_back(trim(cur));
  return parts;
}

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);  // shortest text that parses back exactly
}

template <typename T, typename Fmt>
std::string join(const std::vector<T>& xs, Fmt fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += fmt(xs[i]);
  }
  return out;
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig mc;
  mc.dims = dims;
  mc.layers = layers;
  mc.max_prefix = max_prefix_len;
  mc.leaky_slope = leaky_slope;
  mc.message_sigmoid = message_sigmoid;
  mc.share_relation_params = share_relation_params;
  mc.softmax_over_all_items = softmax_over_all_items;
  mc.bce_loss = bce_loss;
  mc.no_category_nodes = no_category_nodes;
  mc.target_meanpool = target_meanpool;
  mc.no_category_transition = no_category_transition;
  mc.add_original_item_transition = add_original_item_transition;
  mc.attention_readout = attention_readout;
  mc.positive_position = positive_position;
  return mc;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.learning_rate = learning_rate;
  tc.lr_decay_step_epochs = lr_decay_step_epochs;
  tc.lr_decay_factor = lr_decay_factor;
  tc.batch_size = batch_size;
  tc.max_epochs = max_epochs;
  tc.patience = patience;
  tc.seed = seed;
  tc.n_workers = deterministic ? 1 : workers;
  return tc;
}

std::vector<GridCell> RunConfig::grid_cells() const {
  std::vector<GridCell> cells;
  for (double lr : grid_learning_rates)
    for (int decay : grid_decay_steps)
      for (int l : grid_layers) cells.push_back({lr, decay, l});
  return cells;
}

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value,
                        const std::string& origin) {
  if (key == "input") {
    cfg.input = value;
  } else if (key == "sep") {
    if (value == "tab")
      cfg.sep = '\t';
    else if (value == "comma")
      cfg.sep = ',';
    else
      bad_value(origin, key, value, "expected tab or comma");
  } else if (key == "fraction") {
    cfg.fraction = to_double(origin, key, value);
  } else if (key == "min_occurrence") {
    cfg.min_occurrence = static_cast<int>(to_int(origin, key, value));
  } else if (key == "min_session_len") {
    cfg.min_session_len = static_cast<int>(to_int(origin, key, value));
  } else if (key == "max_prefix_len") {
    cfg.max_prefix_len = static_cast<int>(to_int(origin, key, value));
  } else if (key == "data_dir") {
    cfg.data_dir = value;
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else if (key == "dims") {
    cfg.dims = static_cast<int>(to_int(origin, key, value));
  } else if (key == "layers") {
    cfg.layers = static_cast<int>(to_int(origin, key, value));
  } else if (key == "leaky_slope") {
    cfg.leaky_slope = to_double(origin, key, value);
  } else if (key == "message_sigmoid") {
    cfg.message_sigmoid = to_bool(origin, key, value);
  } else if (key == "share_relation_params") {
    cfg.share_relation_params = to_bool(origin, key, value);
  } else if (key == "softmax_over_all_items") {
    cfg.softmax_over_all_items = to_bool(origin, key, value);
  } else if (key == "bce_loss") {
    cfg.bce_loss = to_bool(origin, key, value);
  } else if (key == "no_category_nodes") {
    cfg.no_category_nodes = to_bool(origin, key, value);
  } else if (key == "target_meanpool") {
    cfg.target_meanpool = to_bool(origin, key, value);
  } else if (key == "no_category_transition") {
    cfg.no_category_transition = to_bool(origin, key, value);
  } else if (key == "add_original_item_transition") {
    cfg.add_original_item_transition = to_bool(origin, key, value);
  } else if (key == "attention_readout") {
    cfg.attention_readout = to_bool(origin, key, value);
  } else if (key == "positive_position") {
    cfg.positive_position = to_bool(origin, key, value);
  } else if (key == "learning_rate") {
    cfg.learning_rate = to_double(origin, key, value);
  } else if (key == "lr_decay_step_epochs") {
    cfg.lr_decay_step_epochs = static_cast<int>(to_int(origin, key, value));
  } else if (key == "lr_decay_factor") {
    cfg.lr_decay_factor = to_double(origin, key, value);
  } else if (key == "batch_size") {
    cfg.batch_size = static_cast<int>(to_int(origin, key, value));
  } else if (key == "max_epochs") {
    cfg.max_epochs = static_cast<int>(to_int(origin, key, value));
  } else if (key == "patience") {
    cfg.patience = static_cast<int>(to_int(origin, key, value));
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(to_int(origin, key, value));
  } else if (key == "workers") {
    cfg.workers = static_cast<int>(to_int(origin, key, value));
  } else if (key == "deterministic") {
    cfg.deterministic = to_bool(origin, key, value);
  } else if (key == "train_subsample") {
    cfg.train_subsample = static_cast<std::uint64_t>(to_int(origin, key, value));
  } else if (key == "grid_learning_rates") {
    cfg.grid_learning_rates.clear();
    for (const auto& part : split_csv(value))
      cfg.grid_learning_rates.push_back(to_double(origin, key, part));
  } else if (key == "grid_decay_steps") {
    cfg.grid_decay_steps.clear();
    for (const auto& part : split_csv(value))
      cfg.grid_decay_steps.push_back(static_cast<int>(to_int(origin, key, part)));
  } else if (key == "grid_layers") {
    cfg.grid_layers.clear();
    for (const auto& part : split_csv(value))
      cfg.grid_layers.push_back(static_cast<int>(to_int(origin, key, part)));
  } else {
    throw UsageError(origin + ": unknown key '" + key + "'");
  }
}

RunConfig parse_config(std::istream& in, const std::string& origin, RunConfig defaults) {
  RunConfig cfg = std::move(defaults);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw UsageError(where + ": expected 'key = value'");
    apply_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path, RunConfig defaults) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path);
  return parse_config(in, path, std::move(defaults));
}

void write_config(std::ostream& out, const RunConfig& cfg) {
  out << "# data\n";
  out << "input = " << cfg.input << "\n";
  out << "sep = " << (cfg.sep == ',' ? "comma" : "tab") << "\n";
  out << "fraction = " << format_double(cfg.fraction) << "\n";
  out << "min_occurrence = " << cfg.min_occurrence << "\n";
  out << "min_session_len = " << cfg.min_session_len << "\n";
  out << "max_prefix_len = " << cfg.max_prefix_len << "\n";
  out << "data_dir = " << cfg.data_dir << "\n";
  out << "out_dir = " << cfg.out_dir << "\n";
  out << "# model\n";
  out << "dims = " << cfg.dims << "\n";
  out << "layers = " << cfg.layers << "\n";
  out << "leaky_slope = " << format_double(cfg.leaky_slope) << "\n";
  out << "message_sigmoid = " << (cfg.message_sigmoid ? "true" : "false") << "\n";
  out << "share_relation_params = " << (cfg.share_relation_params ? "true" : "false") << "\n";
  out << "softmax_over_all_items = " << (cfg.softmax_over_all_items ? "true" : "false") << "\n";
  out << "bce_loss = " << (cfg.bce_loss ? "true" : "false") << "\n";
  out << "no_category_nodes = " << (cfg.no_category_nodes ? "true" : "false") << "\n";
  out << "target_meanpool = " << (cfg.target_meanpool ? "true" : "false") << "\n";
  out << "no_category_transition = " << (cfg.no_category_transition ? "true" : "false") << "\n";
  out << "add_original_item_transition = "
      << (cfg.add_original_item_transition ? "true" : "false") << "\n";
  out << "attention_readout = " << (cfg.attention_readout ? "true" : "false") << "\n";
  out << "positive_position = " << (cfg.positive_position ? "true" : "false") << "\n";
  out << "# training\n";
  out << "learning_rate = " << format_double(cfg.learning_rate) << "\n";
  out << "lr_decay_step_epochs = " << cfg.lr_decay_step_epochs << "\n";
  out << "lr_decay_factor = " << format_double(cfg.lr_decay_factor) << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  out << "max_epochs = " << cfg.max_epochs << "\n";
  out << "patience = " << cfg.patience << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "workers = " << cfg.workers << "\n";
  out << "deterministic = " << (cfg.deterministic ? "true" : "false") << "\n";
  out << "train_subsample = " << cfg.train_subsample << "\n";
  out << "# grid\n";
  out << "grid_learning_rates = " << join(cfg.grid_learning_rates, format_double) << "\n";
  out << "grid_decay_steps = "
      << join(cfg.grid_decay_steps, [](int v) { return std::to_string(v); }) << "\n";
  out << "grid_layers = " << join(cfg.grid_layers, [](int v) { return std::to_string(v); })
      << "\n";
}

void apply_grid_spec(RunConfig& cfg, const std::string& spec) {
  std::istringstream in(spec);
  std::string clause;
  while (std::getline(in, clause, ';')) {
    clause = trim(clause);
    if (clause.empty()) continue;
    const auto eq = clause.find('=');
    if (eq == std::string::npos)
      throw UsageError("grid spec: expected axis=v1,v2 in '" + clause + "'");
    const std::string axis = trim(clause.substr(0, eq));
    const std::string values = trim(clause.substr(eq + 1));
    if (axis == "lr")
      apply_config_value(cfg, "grid_learning_rates", values, "grid spec");
    else if (axis == "decay_step")
      apply_config_value(cfg, "grid_decay_steps", values, "grid spec");
    else if (axis == "layers")
      apply_config_value(cfg, "grid_layers", values, "grid spec");
    else
      throw UsageError("grid spec: unknown axis '" + axis + "' (lr, decay_step, layers)");
  }
}

}  // namespace iagnn
