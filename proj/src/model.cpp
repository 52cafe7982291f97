#include "iagnn/model.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "iagnn/data.hpp"
#include "iagnn/errors.hpp"
#include "iagnn/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian");

namespace iagnn {

namespace {

void validate_config(const ModelConfig& c) {
  if (c.dims < 1) throw UsageError("model dims must be >= 1, got " + std::to_string(c.dims));
  if (c.layers < 1) throw UsageError("model layers must be >= 1, got " + std::to_string(c.layers));
  if (c.max_prefix < 1)
    throw UsageError("max_prefix must be >= 1, got " + std::to_string(c.max_prefix));
}

}  // namespace

ModelParams ModelParams::init(std::uint64_t seed, int n_items, int n_categories,
                              const ModelConfig& config) {
  validate_config(config);
  if (n_items < 1 || n_categories < 1)
    throw UsageError("model needs at least one item and one category");
  const int d = config.dims;
  Rng rng(seed);
  auto draw = [&](const std::string& name, int r, int c, bool sparse = false) {
    return Parameter(name, Tensor::gaussian(r, c, 0.0, 0.1, rng), sparse);
  };

  ModelParams p;
  p.n_items = n_items;
  p.n_categories = n_categories;
  p.config = config;
  p.item_table = draw("item_table", n_items, d, true);
  p.category_table = draw("category_table", n_categories, d, true);
  p.position_table = draw("position_table", config.max_prefix, d, true);
  p.enhance_proj = draw("enhance_proj", 3 * d, d);
  p.relation.resize(config.layers);
  for (int l = 0; l < config.layers; ++l) {
    for (int s = 0; s < config.relation_param_sets(); ++s) {
      const std::string base = "layer" + std::to_string(l) + "." + std::to_string(s) + ".";
      p.relation[l].push_back(RelationParams{draw(base + "weight", d, d),
                                             draw(base + "a_left", d, 1),
                                             draw(base + "a_right", d, 1)});
    }
  }
  p.item_gate = draw("item_gate", 2 * d, d);
  p.category_gate = draw("category_gate", 2 * d, d);
  p.target_gate = draw("target_gate", 2 * d, d);
  p.last_item_fusion_gate = draw("last_item_fusion_gate", 2 * d, d);
  p.last_category_fusion_gate = draw("last_category_fusion_gate", 2 * d, d);
  p.session_proj = draw("session_proj", 3 * d, d);
  return p;
}

RelationParams& ModelParams::relation_params(int layer, Relation r) {
  return relation[layer][config.share_relation_params ? 0 : static_cast<int>(r)];
}

std::vector<Parameter*> ModelParams::all() {
  std::vector<Parameter*> out = {&item_table, &category_table, &position_table, &enhance_proj};
  for (auto& layer : relation)
    for (auto& rp : layer) {
      out.push_back(&rp.weight);
      out.push_back(&rp.a_left);
      out.push_back(&rp.a_right);
    }
  out.push_back(&item_gate);
  out.push_back(&category_gate);
  out.push_back(&target_gate);
  out.push_back(&last_item_fusion_gate);
  out.push_back(&last_category_fusion_gate);
  out.push_back(&session_proj);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (auto* p : const_cast<ModelParams*>(this)->all()) n += p->value.size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto* p : all()) p->zero_grad();
}

CandidateIndex CandidateIndex::from(const Vocabulary& vocab) {
  CandidateIndex ci;
  ci.n_items = vocab.n_items();
  ci.by_category = vocab.candidates_by_category;
  return ci;
}

CandidateIndex CandidateIndex::from_item_categories(const std::vector<int>& item_category,
                                                    int n_categories) {
  CandidateIndex ci;
  ci.n_items = static_cast<int>(item_category.size());
  ci.by_category.assign(n_categories, {});
  for (int i = 0; i < ci.n_items; ++i) {
    if (item_category[i] < 0 || item_category[i] >= n_categories)
      throw DataError("item " + std::to_string(i) + " has category " +
                      std::to_string(item_category[i]) + " outside [0, " +
                      std::to_string(n_categories) + ")");
    ci.by_category[item_category[i]].push_back(i);
  }
  return ci;
}

namespace {

// contiguous incoming-edge runs of a (dst, src)-sorted edge list
struct Segments {
  std::vector<int> src;      // per edge
  std::vector<int> dst;      // per edge
  std::vector<int> offsets;  // run boundaries, size = unique_dst.size() + 1
  std::vector<int> unique_dst;
};

Segments segment_edges(const std::vector<Edge>& edges) {
  Segments s;
  s.offsets.push_back(0);
  for (std::size_t i = 0; i < edges.size();) {
    std::size_t j = i;
    while (j < edges.size() && edges[j].dst == edges[i].dst) {
      s.src.push_back(edges[j].src);
      s.dst.push_back(edges[j].dst);
      ++j;
    }
    s.unique_dst.push_back(edges[i].dst);
    s.offsets.push_back(static_cast<int>(j));
    i = j;
  }
  return s;
}

}  // namespace

ExampleTape::ExampleTape(ModelParams& params, const Example& ex, const CandidateIndex& candidates,
                         ForwardTrace* trace) {
  const ModelConfig& cfg = params.config;
  validate_config(cfg);
  const int d = cfg.dims;
  const int n = static_cast<int>(ex.prefix_items.size());
  if (n > cfg.max_prefix)
    throw NumericError("prefix length " + std::to_string(n) + " exceeds max_prefix " +
                       std::to_string(cfg.max_prefix));

  const CategoryAwareGraph g = build_graph(ex, cfg.graph_options());
  const int n_items = g.n_item_nodes();
  const int n_cats = g.n_category_nodes();
  Tape& t = tape_;

  // --- initial node states ---------------------------------------------
  // item nodes: project [item embedding || category embedding || position]
  std::unordered_map<int, int> category_of_item;
  for (int i = 0; i < n; ++i) category_of_item.try_emplace(ex.prefix_items[i], ex.prefix_categories[i]);
  std::vector<int> item_cat_rows(n_items), pos_rows(n_items);
  for (int v = 0; v < n_items; ++v) {
    item_cat_rows[v] = category_of_item.at(g.item_index[v]);
    pos_rows[v] = cfg.positive_position ? g.item_last_position[v] - 1
                                        : n - g.item_last_position[v];
  }
  auto item_h0 = t.matmul(t.concat_cols({t.gather_rows(params.item_table, g.item_index),
                                         t.gather_rows(params.category_table, item_cat_rows),
                                         t.gather_rows(params.position_table, pos_rows)}),
                          t.param(params.enhance_proj));
  auto target_h0 = cfg.target_meanpool
                       ? t.mean_rows(t.gather_rows(params.item_table, ex.prefix_items))
                       : t.gather_rows(params.category_table, {ex.target_category});
  Tape::Ref h = -1;
  if (n_cats > 0) {
    auto cat_h0 = t.gather_rows(params.category_table, g.category_index);
    h = t.concat_rows({item_h0, cat_h0, target_h0});
  } else {
    h = t.concat_rows({item_h0, target_h0});
  }
  const Tape::Ref h0 = h;

  // --- attention message passing ----------------------------------------
  if (trace) trace->attention.resize(cfg.layers);
  for (int l = 0; l < cfg.layers; ++l) {
    Tape::Ref next = -1;
    for (int r = 0; r < kNumRelations; ++r) {
      const Relation rel = static_cast<Relation>(r);
      if (rel == Relation::CatCat && cfg.no_category_transition) continue;
      const auto& edges = g.relation_edges(rel);
      if (edges.empty()) continue;
      const Segments seg = segment_edges(edges);
      RelationParams& rp = params.relation_params(l, rel);

      auto wh = t.matmul(h, t.param(rp.weight));
      auto score_dst = t.gather_node_rows(t.matmul(wh, t.param(rp.a_left)), seg.dst);
      auto score_src = t.gather_node_rows(t.matmul(wh, t.param(rp.a_right)), seg.src);
      auto alpha = t.segment_softmax(t.leaky_relu(t.add(score_dst, score_src), cfg.leaky_slope),
                                     seg.offsets);
      auto message = t.segment_sum_rows(t.scale_rows(t.gather_node_rows(wh, seg.src), alpha),
                                        seg.offsets);
      if (cfg.message_sigmoid) message = t.sigmoid(message);
      auto out = t.scatter_add_rows(message, seg.unique_dst, g.n_nodes());
      next = next < 0 ? out : t.add(next, out);
      if (trace) trace->attention[l][r] = t.value(alpha).data;
    }
    h = next;  // every relation set leaves at least ITEM_ITEM + target edges
  }

  // --- gated skip connection per node kind -------------------------------
  auto gated = [&](Tape::Ref a, Tape::Ref b, Parameter& gate, int rows,
                   Tensor* gate_out) {
    auto gt = t.sigmoid(t.matmul(t.concat_cols({a, b}), t.param(gate)));
    if (gate_out) *gate_out = t.value(gt);
    auto ones = t.constant(Tensor::filled(rows, d, 1.0));
    return t.add(t.mul(gt, a), t.mul(t.sub(ones, gt), b));
  };
  auto final_items = gated(t.slice_rows(h0, 0, n_items), t.slice_rows(h, 0, n_items),
                           params.item_gate, n_items, trace ? &trace->item_gates : nullptr);
  std::vector<Tape::Ref> final_parts = {final_items};
  if (n_cats > 0)
    final_parts.push_back(gated(t.slice_rows(h0, n_items, n_cats),
                                t.slice_rows(h, n_items, n_cats), params.category_gate, n_cats,
                                trace ? &trace->category_gates : nullptr));
  final_parts.push_back(gated(t.slice_rows(h0, g.target_node(), 1),
                              t.slice_rows(h, g.target_node(), 1), params.target_gate, 1,
                              trace ? &trace->target_gates : nullptr));
  auto final_state = t.concat_rows(final_parts);

  // --- readout ------------------------------------------------------------
  auto h_v = gated(t.slice_rows(final_state, g.last_item_node, 1),
                   t.slice_rows(final_state, g.last_incat_item_node, 1),
                   params.last_item_fusion_gate, 1, nullptr);
  auto h_ct = t.slice_rows(final_state, g.target_node(), 1);
  if (cfg.attention_readout) {
    // parameter-free dot-product attention over item nodes, queried by the
    // target representation
    auto item_states = t.slice_rows(final_state, 0, n_items);
    std::vector<int> one_segment = {0, n_items};
    auto alpha = t.segment_softmax(t.matmul(item_states, t.transpose(h_ct)), one_segment);
    h_v = t.add(h_v, t.segment_sum_rows(t.scale_rows(item_states, alpha), one_segment));
  }
  Tape::Ref h_c = -1;
  if (n_cats > 0) {
    h_c = gated(t.slice_rows(final_state, g.last_cat_node, 1),
                t.slice_rows(final_state, g.last_incat_cat_node, 1),
                params.last_category_fusion_gate, 1, nullptr);
  } else {
    h_c = t.constant(Tensor::zeros(1, d));  // no category nodes to read from
  }
  auto h_s = t.matmul(t.concat_cols({h_v, h_c, h_ct}), t.param(params.session_proj));

  // --- scoring over the candidate set -------------------------------------
  if (ex.target_category < 0 ||
      ex.target_category >= static_cast<int>(candidates.by_category.size()))
    throw DataError("target category " + std::to_string(ex.target_category) +
                    " outside the candidate index");
  std::vector<int> cand;
  if (cfg.softmax_over_all_items) {
    cand.resize(candidates.n_items);
    for (int i = 0; i < candidates.n_items; ++i) cand[i] = i;
  } else {
    cand = candidates.by_category[ex.target_category];
  }
  if (cand.empty())
    throw DataError("empty candidate set for target category " +
                    std::to_string(ex.target_category));
  const auto label_it = std::lower_bound(cand.begin(), cand.end(), ex.label_item);
  if (label_it == cand.end() || *label_it != ex.label_item)
    throw DataError("label item " + std::to_string(ex.label_item) +
                    " not in the candidate set of category " +
                    std::to_string(ex.target_category));
  const int label_pos = static_cast<int>(label_it - cand.begin());

  auto scores = t.matmul(t.gather_rows(params.item_table, cand), t.transpose(h_s));
  loss_ = cfg.bce_loss ? t.bce_with_logits(scores, label_pos)
                       : t.neg_log_softmax(scores, label_pos);

  result_.loss = t.value(loss_).at(0, 0);
  result_.candidates = std::move(cand);
  result_.scores = t.value(scores).data;
  result_.label_pos = label_pos;
  if (trace) {
    trace->graph = g;
    trace->h0 = t.value(h0);
    trace->hfinal = t.value(final_state);
    trace->h_v = t.value(h_v);
    trace->h_c = t.value(h_c);
    trace->h_ct = t.value(h_ct);
    trace->h_s = t.value(h_s);
  }
}

ForwardResult forward(ModelParams& params, const Example& ex, const CandidateIndex& candidates,
                      ForwardTrace* trace) {
  return ExampleTape(params, ex, candidates, trace).result();
}

// --- checkpoint ------------------------------------------------------------

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  const ModelConfig& c = params.config;
  std::ostringstream head;
  head.precision(17);
  head << "IAGNN-CKPT v1\n"
       << "n_items " << params.n_items << "\n"
       << "n_categories " << params.n_categories << "\n"
       << "dims " << c.dims << "\n"
       << "layers " << c.layers << "\n"
       << "max_prefix " << c.max_prefix << "\n"
       << "leaky_slope " << c.leaky_slope << "\n"
       << "message_sigmoid " << c.message_sigmoid << "\n"
       << "share_relation_params " << c.share_relation_params << "\n"
       << "softmax_over_all_items " << c.softmax_over_all_items << "\n"
       << "bce_loss " << c.bce_loss << "\n"
       << "no_category_nodes " << c.no_category_nodes << "\n"
       << "target_meanpool " << c.target_meanpool << "\n"
       << "no_category_transition " << c.no_category_transition << "\n"
       << "add_original_item_transition " << c.add_original_item_transition << "\n"
       << "attention_readout " << c.attention_readout << "\n"
       << "positive_position " << c.positive_position << "\n";
  auto tensors = const_cast<ModelParams&>(params).all();
  head << "tensors " << tensors.size() << "\n";
  out << head.str();
  for (const Parameter* p : tensors) {
    out << "tensor " << p->name << " " << p->value.rows << " " << p->value.cols << "\n";
    out.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    out << "\n";
  }
  if (!out) throw DataError("save_checkpoint: write failure on " + path);
}

namespace {

std::string expect_key(std::istream& in, const std::string& key, const std::string& path) {
  std::string line;
  if (!std::getline(in, line))
    throw DataError(path + ": checkpoint truncated before '" + key + "'");
  if (line.rfind(key + " ", 0) != 0)
    throw DataError(path + ": expected '" + key + " ...', got '" + line + "'");
  return line.substr(key.size() + 1);
}

int expect_int(std::istream& in, const std::string& key, const std::string& path) {
  return std::stoi(expect_key(in, key, path));
}

}  // namespace

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != "IAGNN-CKPT v1")
    throw DataError(path + ": not a checkpoint (header '" + magic + "')");
  const int n_items = expect_int(in, "n_items", path);
  const int n_categories = expect_int(in, "n_categories", path);
  ModelConfig c;
  c.dims = expect_int(in, "dims", path);
  c.layers = expect_int(in, "layers", path);
  c.max_prefix = expect_int(in, "max_prefix", path);
  c.leaky_slope = std::stod(expect_key(in, "leaky_slope", path));
  c.message_sigmoid = expect_int(in, "message_sigmoid", path);
  c.share_relation_params = expect_int(in, "share_relation_params", path);
  c.softmax_over_all_items = expect_int(in, "softmax_over_all_items", path);
  c.bce_loss = expect_int(in, "bce_loss", path);
  c.no_category_nodes = expect_int(in, "no_category_nodes", path);
  c.target_meanpool = expect_int(in, "target_meanpool", path);
  c.no_category_transition = expect_int(in, "no_category_transition", path);
  c.add_original_item_transition = expect_int(in, "add_original_item_transition", path);
  c.attention_readout = expect_int(in, "attention_readout", path);
  c.positive_position = expect_int(in, "positive_position", path);

  ModelParams params = ModelParams::init(0, n_items, n_categories, c);
  auto tensors = params.all();
  const auto declared = static_cast<std::size_t>(expect_int(in, "tensors", path));
  if (declared != tensors.size())
    throw DataError(path + ": checkpoint has " + std::to_string(declared) + " tensors, model has " +
                    std::to_string(tensors.size()));
  for (Parameter* p : tensors) {
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": truncated before tensor " + p->name);
    std::istringstream ls(line);
    std::string tag, name;
    int rows = 0, cols = 0;
    ls >> tag >> name >> rows >> cols;
    if (tag != "tensor" || name != p->name || rows != p->value.rows || cols != p->value.cols)
      throw DataError(path + ": expected tensor " + p->name + " " +
                      std::to_string(p->value.rows) + "x" + std::to_string(p->value.cols) +
                      ", got '" + line + "'");
    in.read(reinterpret_cast<char*>(p->value.data.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(p->value.size() * sizeof(double)))
      throw DataError(path + ": truncated payload for tensor " + p->name);
    in.get();  // trailing newline
    if (!p->value.all_finite())
      throw NumericError(path + ": non-finite values in tensor " + p->name);
  }
  return params;
}

}  // namespace iagnn
