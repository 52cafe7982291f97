// IAGNN network: embedding enhancement, attention propagation, gated skip,
// dual last-item readout, candidate scoring, every ablation switch, and the
// checkpoint format. Gradients are verified end to end against central
// finite differences; the readout is verified against a straight-line
// recomputation that shares no code with the tape.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "iagnn/errors.hpp"
#include "iagnn/gradcheck.hpp"
#include "iagnn/model.hpp"
#include "iagnn/rng.hpp"

using namespace iagnn;

namespace {

Example example(std::vector<int> items, std::vector<int> cats, int target, int label) {
  Example ex;
  ex.prefix_items = std::move(items);
  ex.prefix_categories = std::move(cats);
  ex.target_category = target;
  ex.label_item = label;
  return ex;
}

// items 0..8 over three categories: cat 0 = {0,1,2}, cat 1 = {3,4,5}, cat 2 = {6,7,8}
const std::vector<int> kItemCat = {0, 0, 0, 1, 1, 1, 2, 2, 2};

CandidateIndex candidates() { return CandidateIndex::from_item_categories(kItemCat, 3); }

ModelConfig small_config(int dims = 4, int layers = 1) {
  ModelConfig cfg;
  cfg.dims = dims;
  cfg.layers = layers;
  cfg.max_prefix = 10;
  return cfg;
}

double row_norm(const Tensor& t, int r) {
  double n = 0.0;
  for (int c = 0; c < t.cols; ++c) n += t.at(r, c) * t.at(r, c);
  return std::sqrt(n);
}

std::set<int> touched_set(const Parameter& p) {
  return std::set<int>(p.touched.begin(), p.touched.end());
}

}  // namespace

TEST_CASE("init is seed-deterministic with the requested spread") {
  ModelConfig cfg;
  cfg.dims = 100;
  auto a = ModelParams::init(7, 10000, 3, cfg);
  auto b = ModelParams::init(7, 10000, 3, cfg);
  CHECK(a.item_table.value.data == b.item_table.value.data);
  CHECK(a.session_proj.value.data == b.session_proj.value.data);
  auto c = ModelParams::init(8, 10000, 3, cfg);
  CHECK(a.item_table.value.data != c.item_table.value.data);

  // 10^6 Gaussian(0, 0.1) draws: mean within 3 sigma/sqrt(N), std within 5%
  const auto& e = a.item_table.value.data;
  const double mean = std::accumulate(e.begin(), e.end(), 0.0) / e.size();
  double var = 0.0;
  for (double x : e) var += (x - mean) * (x - mean);
  var /= e.size();
  CHECK(std::abs(mean) < 3.0 * 0.1 / std::sqrt(static_cast<double>(e.size())));
  CHECK(std::sqrt(var) > 0.095);
  CHECK(std::sqrt(var) < 0.105);
}

TEST_CASE("parameter count follows the layout formula") {
  auto count = [](int v, int c, int d, int n_max, int layers, int sets) {
    return static_cast<std::size_t>(v) * d + static_cast<std::size_t>(c) * d +
           static_cast<std::size_t>(n_max) * d + 3 * d * d +
           static_cast<std::size_t>(layers) * sets * (d * d + 2 * d) + 5 * (2 * d * d) +
           3 * d * d;
  };
  ModelConfig cfg;  // defaults: d=128, L=1, n_max=50, six relations
  auto p = ModelParams::init(1, 200, 9, cfg);
  CHECK(p.parameter_count() == count(200, 9, 128, 50, 1, 6));

  cfg.layers = 3;
  cfg.add_original_item_transition = true;  // seventh relation set
  CHECK(ModelParams::init(1, 200, 9, cfg).parameter_count() == count(200, 9, 128, 50, 3, 7));

  cfg.share_relation_params = true;  // one set per layer
  CHECK(ModelParams::init(1, 200, 9, cfg).parameter_count() == count(200, 9, 128, 50, 3, 1));

  ModelConfig bad;
  bad.layers = 0;
  CHECK_THROWS_AS(ModelParams::init(1, 10, 2, bad), UsageError);
}

TEST_CASE("forward is deterministic and loss matches a naive log-sum-exp") {
  auto params = ModelParams::init(11, 9, 3, small_config());
  const auto ex = example({0, 3, 1}, {0, 1, 0}, 0, 2);
  auto r1 = forward(params, ex, candidates());
  auto r2 = forward(params, ex, candidates());
  CHECK(r1.scores == r2.scores);  // bitwise
  CHECK(r1.loss == r2.loss);

  CHECK(r1.candidates == std::vector<int>{0, 1, 2});
  CHECK(r1.label_pos == 2);
  double z = 0.0;
  for (double s : r1.scores) z += std::exp(s);
  CHECK(r1.loss == doctest::Approx(std::log(z) - r1.scores[2]).epsilon(1e-12));
}

TEST_CASE("attention weights normalize per node and gates stay in (0,1)") {
  auto params = ModelParams::init(5, 9, 3, small_config(6, 2));
  ForwardTrace trace;
  forward(params, example({0, 3, 6, 1, 0}, {0, 1, 2, 0, 0}, 2, 7), candidates(), &trace);

  REQUIRE(trace.attention.size() == 2);
  for (const auto& layer : trace.attention) {
    for (int r = 0; r < kNumRelations; ++r) {
      const auto& edges = trace.graph.relation_edges(static_cast<Relation>(r));
      if (edges.empty()) continue;
      REQUIRE(layer[r].size() == edges.size());
      std::size_t i = 0;
      while (i < edges.size()) {
        double sum = 0.0;
        std::size_t j = i;
        while (j < edges.size() && edges[j].dst == edges[i].dst) sum += layer[r][j++];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        i = j;
      }
    }
  }
  for (const Tensor* g : {&trace.item_gates, &trace.category_gates, &trace.target_gates}) {
    for (double x : g->data) {
      CHECK(x > 0.0);
      CHECK(x < 1.0);
    }
  }
}

TEST_CASE("attention degenerates correctly on tiny neighborhoods") {
  auto params = ModelParams::init(3, 9, 3, small_config());
  const int tgt = static_cast<int>(Relation::ItemToTgt);

  ForwardTrace trace;
  forward(params, example({5}, {1}, 1, 4), candidates(), &trace);
  REQUIRE(trace.attention[0][tgt].size() == 1);  // single neighbor
  CHECK(trace.attention[0][tgt][0] == doctest::Approx(1.0));

  // two items with identical initial states split the target's attention
  for (int c = 0; c < 4; ++c)
    params.item_table.value.at(1, c) = params.item_table.value.at(0, c);
  params.position_table.value.fill(0.0);
  ForwardTrace twin;
  forward(params, example({0, 1}, {0, 0}, 0, 2), candidates(), &twin);
  REQUIRE(twin.attention[0][tgt].size() == 2);
  CHECK(twin.attention[0][tgt][0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(twin.attention[0][tgt][1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("two candidates with identical embeddings cost ln 2; singletons cost 0") {
  auto params = ModelParams::init(9, 9, 3, small_config());
  for (int c = 0; c < 4; ++c) params.item_table.value.at(1, c) = params.item_table.value.at(0, c);
  // category 0 restricted to items {0,1} by scoring only those two
  CandidateIndex two;
  two.n_items = 9;
  two.by_category = {{0, 1}, {3, 4, 5}, {6, 7, 8}};
  auto r = forward(params, example({3, 4}, {1, 1}, 0, 1), two);
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  CandidateIndex one;
  one.n_items = 9;
  one.by_category = {{0}, {3, 4, 5}, {6, 7, 8}};
  auto rs = forward(params, example({3, 4}, {1, 1}, 0, 0), one);
  CHECK(rs.loss == doctest::Approx(0.0));
}

TEST_CASE("readout matches a straight-line recomputation") {
  auto params = ModelParams::init(21, 9, 3, small_config(5, 2));
  const auto ex = example({0, 3, 6, 1}, {0, 1, 2, 0}, 2, 8);
  ForwardTrace trace;
  auto result = forward(params, ex, candidates(), &trace);
  const auto& g = trace.graph;
  const int d = 5;

  // plain-loop gate: sigmoid([a||b] W) blending a toward b
  auto gate_blend = [&](const std::vector<double>& a, const std::vector<double>& b,
                        const Parameter& w) {
    std::vector<double> out(d);
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += a[j] * w.value.at(j, k) + b[j] * w.value.at(d + j, k);
      const double gk = 1.0 / (1.0 + std::exp(-s));
      out[k] = gk * a[k] + (1.0 - gk) * b[k];
    }
    return out;
  };
  auto node_state = [&](int node) {
    return std::vector<double>(trace.hfinal.row(node), trace.hfinal.row(node) + d);
  };

  const auto h_v = gate_blend(node_state(g.last_item_node), node_state(g.last_incat_item_node),
                              params.last_item_fusion_gate);
  const auto h_c = gate_blend(node_state(g.last_cat_node), node_state(g.last_incat_cat_node),
                              params.last_category_fusion_gate);
  const auto h_ct = node_state(g.target_node());
  std::vector<double> h_s(d);
  for (int k = 0; k < d; ++k) {
    double s = 0.0;
    for (int j = 0; j < d; ++j)
      s += h_v[j] * params.session_proj.value.at(j, k) +
           h_c[j] * params.session_proj.value.at(d + j, k) +
           h_ct[j] * params.session_proj.value.at(2 * d + j, k);
    h_s[k] = s;
  }
  for (int k = 0; k < d; ++k) {
    CHECK(trace.h_v.at(0, k) == doctest::Approx(h_v[k]).epsilon(1e-12));
    CHECK(trace.h_c.at(0, k) == doctest::Approx(h_c[k]).epsilon(1e-12));
    CHECK(trace.h_s.at(0, k) == doctest::Approx(h_s[k]).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += params.item_table.value.at(result.candidates[i], k) * h_s[k];
    CHECK(result.scores[i] == doctest::Approx(s).epsilon(1e-10));
  }
}

TEST_CASE("matching target and last-item categories collapse the item fusion") {
  auto params = ModelParams::init(23, 9, 3, small_config());
  ForwardTrace trace;
  // last item is 6 (category 2) and the target is category 2
  forward(params, example({0, 6}, {0, 2}, 2, 7), candidates(), &trace);
  CHECK(trace.graph.last_incat_item_node == trace.graph.last_item_node);
  for (int k = 0; k < 4; ++k)
    CHECK(trace.h_v.at(0, k) ==
          doctest::Approx(trace.hfinal.at(trace.graph.last_item_node, k)).epsilon(1e-12));
}

TEST_CASE("position table rows are keyed by last occurrence, reversed by default") {
  auto cfg = small_config();
  auto params = ModelParams::init(29, 9, 3, cfg);
  const auto ex = example({0, 1, 0}, {0, 0, 0}, 0, 2);  // item 0 recurs
  {
    ExampleTape tape(params, ex, candidates());
    tape.backward();
    params.zero_grad();
    tape.accumulate();
    // n=3; item 0 last at position 3 -> row 0, item 1 at position 2 -> row 1
    CHECK(touched_set(params.position_table) == std::set<int>{0, 1});
  }
  cfg.positive_position = true;
  auto fwd = ModelParams::init(29, 9, 3, cfg);
  {
    ExampleTape tape(fwd, ex, candidates());
    tape.backward();
    fwd.zero_grad();
    tape.accumulate();
    // positive mode counts from the front: rows 2 and 1
    CHECK(touched_set(fwd.position_table) == std::set<int>{2, 1});
  }
}

TEST_CASE("category table reads shrink exactly with the ablations") {
  const auto ex = example({0, 1}, {0, 0}, 1, 4);  // prefix in category 0, target 1

  auto run = [&](ModelConfig cfg) {
    auto params = ModelParams::init(31, 9, 3, cfg);
    ExampleTape tape(params, ex, candidates());
    tape.backward();
    params.zero_grad();
    tape.accumulate();
    return touched_set(params.category_table);
  };
  CHECK(run(small_config()) == std::set<int>{0, 1});  // enhancement + target embedding
  ModelConfig meanpool = small_config();
  meanpool.target_meanpool = true;
  CHECK(run(meanpool) == std::set<int>{0});  // target no longer reads its category row
  ModelConfig bare = small_config();
  bare.no_category_nodes = true;
  CHECK(run(bare) == std::set<int>{0, 1});  // enhancement and target remain
  bare.target_meanpool = true;
  CHECK(run(bare) == std::set<int>{0});  // only the enhancement concatenation remains
}

TEST_CASE("ablations prune the expected relations") {
  const auto ex = example({0, 3, 0, 6}, {0, 1, 0, 2}, 2, 7);

  ModelConfig cfg = small_config();
  cfg.no_category_transition = true;
  auto params = ModelParams::init(37, 9, 3, cfg);
  ForwardTrace trace;
  forward(params, ex, candidates(), &trace);
  CHECK(trace.attention[0][static_cast<int>(Relation::CatCat)].empty());
  CHECK_FALSE(trace.attention[0][static_cast<int>(Relation::ItemToCat)].empty());
  CHECK_FALSE(trace.graph.relation_edges(Relation::CatCat).empty());  // graph keeps them

  ModelConfig bare = small_config();
  bare.no_category_nodes = true;
  auto bare_params = ModelParams::init(37, 9, 3, bare);
  ForwardTrace bare_trace;
  forward(bare_params, ex, candidates(), &bare_trace);
  CHECK(bare_trace.graph.n_category_nodes() == 0);
  for (Relation r : {Relation::CatCat, Relation::ItemToCat, Relation::CatToItem})
    CHECK(bare_trace.attention[0][static_cast<int>(r)].empty());
  for (Relation r : {Relation::ItemItem, Relation::ItemToTgt, Relation::TgtToItem})
    CHECK_FALSE(bare_trace.attention[0][static_cast<int>(r)].empty());

  ModelConfig seq = small_config();
  seq.add_original_item_transition = true;
  auto seq_params = ModelParams::init(37, 9, 3, seq);
  ForwardTrace seq_trace;
  forward(seq_params, ex, candidates(), &seq_trace);
  CHECK_FALSE(seq_trace.attention[0][static_cast<int>(Relation::ItemSeq)].empty());
}

TEST_CASE("loss gradient reaches the target category embedding and all prefix items") {
  auto params = ModelParams::init(41, 9, 3, small_config());
  const auto ex = example({0, 3, 6, 1}, {0, 1, 2, 0}, 2, 8);
  ExampleTape tape(params, ex, candidates());
  tape.backward();
  params.zero_grad();
  tape.accumulate();
  CHECK(row_norm(params.category_table.grad, 2) > 0.0);  // target category row
  for (int item : {0, 3, 6, 1}) CHECK(row_norm(params.item_table.grad, item) > 0.0);
}

TEST_CASE("full finite-difference check across configurations") {
  const std::vector<Example> batch = {
      example({0, 3, 0, 1}, {0, 1, 0, 0}, 0, 2),
      example({6, 7}, {2, 2}, 2, 8),
      example({3, 6, 4}, {1, 2, 1}, 1, 5),
  };
  auto run = [&](ModelConfig cfg, std::uint64_t seed) {
    auto params = ModelParams::init(seed, 9, 3, cfg);
    const auto cand = candidates();
    auto loss_fn = [&]() {
      double s = 0.0;
      for (const auto& ex : batch) s += forward(params, ex, cand).loss;
      return s / batch.size();
    };
    auto grad_fn = [&]() {
      params.zero_grad();
      for (const auto& ex : batch) {
        ExampleTape tape(params, ex, cand);
        tape.backward();
        tape.accumulate(1.0 / batch.size());
      }
    };
    return finite_difference_check(loss_fn, grad_fn, params.all());
  };

  SUBCASE("default configuration") {
    auto r = run(small_config(5, 2), 43);
    INFO(r.summary());
    CHECK(r.passed());
  }
  SUBCASE("ablation stack: meanpool, attention readout, positive positions, raw transitions, bce") {
    ModelConfig cfg = small_config(4, 2);
    cfg.target_meanpool = true;
    cfg.attention_readout = true;
    cfg.positive_position = true;
    cfg.add_original_item_transition = true;
    cfg.bce_loss = true;
    auto r = run(cfg, 47);
    INFO(r.summary());
    CHECK(r.passed());
  }
  SUBCASE("no category nodes") {
    ModelConfig cfg = small_config(4, 1);
    cfg.no_category_nodes = true;
    auto r = run(cfg, 53);
    INFO(r.summary());
    CHECK(r.passed());
  }
  SUBCASE("shared relation parameters, full-vocabulary softmax, linear messages") {
    ModelConfig cfg = small_config(4, 2);
    cfg.share_relation_params = true;
    cfg.softmax_over_all_items = true;
    cfg.message_sigmoid = false;
    cfg.no_category_transition = true;
    auto r = run(cfg, 59);
    INFO(r.summary());
    CHECK(r.passed());
  }
}

TEST_CASE("guards: candidate set, label membership, prefix cap") {
  auto params = ModelParams::init(61, 9, 3, small_config());
  CandidateIndex empty_cat;
  empty_cat.n_items = 9;
  empty_cat.by_category = {{0, 1, 2}, {}, {6, 7, 8}};
  CHECK_THROWS_AS(forward(params, example({0}, {0}, 1, 3), empty_cat), DataError);
  // label 3 is category 1, not in the target category 0 candidate list
  CHECK_THROWS_AS(forward(params, example({0}, {0}, 0, 3), candidates()), DataError);
  std::vector<int> long_prefix(11, 0), long_cats(11, 0);
  CHECK_THROWS_AS(
      forward(params, example(std::move(long_prefix), std::move(long_cats), 0, 1), candidates()),
      NumericError);
}

TEST_CASE("checkpoint round-trips bitwise and rejects damage") {
  ModelConfig cfg = small_config(6, 2);
  cfg.attention_readout = true;
  auto params = ModelParams::init(67, 9, 3, cfg);
  const std::string path = "test_model_ckpt.tmp";
  save_checkpoint(path, params);
  auto back = load_checkpoint(path);
  CHECK(back.config == params.config);
  CHECK(back.n_items == 9);
  auto orig_tensors = params.all();
  auto back_tensors = back.all();
  REQUIRE(orig_tensors.size() == back_tensors.size());
  for (std::size_t i = 0; i < orig_tensors.size(); ++i) {
    CHECK(back_tensors[i]->name == orig_tensors[i]->name);
    CHECK(back_tensors[i]->value.data == orig_tensors[i]->value.data);  // bitwise
  }
  // the reloaded model scores identically
  const auto ex = example({0, 3}, {0, 1}, 0, 1);
  CHECK(forward(back, ex, candidates()).scores == forward(params, ex, candidates()).scores);

  {
    std::ofstream bad(path, std::ios::binary);
    bad << "IAGNN-CKPT v2\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  save_checkpoint(path, params);
  {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    auto text = buf.str();
    std::ofstream out(path, std::ios::binary);
    out.write(text.data(), static_cast<std::streamsize>(text.size() / 2));  // truncate
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  std::remove(path.c_str());
}
