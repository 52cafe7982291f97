#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "iagnn/graph.hpp"
#include "iagnn/tape.hpp"

namespace iagnn {

struct Vocabulary;

// All model hyperparameters and ablation switches. Embedding, position, and
// hidden dims are a single knob; the defaults mirror the reference setup.
struct ModelConfig {
  int dims = 128;
  int layers = 1;
  int max_prefix = 50;
  double leaky_slope = 0.2;

  bool message_sigmoid = true;          // activation on aggregated messages
  bool share_relation_params = false;   // one (W, a_l, a_r) per layer instead of per relation
  bool softmax_over_all_items = false;  // score every item instead of the target category
  bool bce_loss = false;                // literal binary cross-entropy over sigmoid scores

  // ablation switches
  bool no_category_nodes = false;
  bool target_meanpool = false;          // target starts from mean of prefix item embeddings
  bool no_category_transition = false;   // drop CAT_CAT messages
  bool add_original_item_transition = false;  // extra ITEM_SEQ relation
  bool attention_readout = false;        // add target-queried attention over item nodes
  bool positive_position = false;        // position rows count from the front

  int n_relations() const { return add_original_item_transition ? 7 : 6; }
  int relation_param_sets() const { return share_relation_params ? 1 : n_relations(); }
  GraphOptions graph_options() const {
    return {.category_nodes = !no_category_nodes,
            .original_item_transition = add_original_item_transition};
  }
  bool operator==(const ModelConfig&) const = default;
};

struct RelationParams {
  Parameter weight;   // (d, d)
  Parameter a_left;   // (d, 1), scores the receiving node
  Parameter a_right;  // (d, 1), scores the neighbor
};

// Every learnable tensor. Copyable; the copy owns its own gradients, which is
// how the trainer keeps its best-validation snapshot.
struct ModelParams {
  int n_items = 0;
  int n_categories = 0;
  ModelConfig config;

  Parameter item_table;      // (|V|, d), rows double as the scoring embeddings
  Parameter category_table;  // (|C|, d)
  Parameter position_table;  // (max_prefix, d)
  Parameter enhance_proj;    // (3d, d), item || category || position -> h0

  std::vector<std::vector<RelationParams>> relation;  // [layer][param set]

  Parameter item_gate;      // (2d, d) skip gates per node kind
  Parameter category_gate;  // (2d, d)
  Parameter target_gate;    // (2d, d)
  Parameter last_item_fusion_gate;      // (2d, d)
  Parameter last_category_fusion_gate;  // (2d, d)
  Parameter session_proj;               // (3d, d)

  // deterministic: every tensor drawn from Gaussian(0, 0.1) in declared order
  static ModelParams init(std::uint64_t seed, int n_items, int n_categories,
                          const ModelConfig& config);

  RelationParams& relation_params(int layer, Relation r);
  std::vector<Parameter*> all();
  std::size_t parameter_count() const;
  void zero_grad();
};

// Candidate items per target category, detached from the string vocabulary so
// the model stays purely numeric.
struct CandidateIndex {
  int n_items = 0;
  std::vector<std::vector<int>> by_category;  // ascending item indices

  static CandidateIndex from(const Vocabulary& vocab);
  static CandidateIndex from_item_categories(const std::vector<int>& item_category,
                                             int n_categories);
};

struct ForwardResult {
  double loss = 0.0;
  std::vector<int> candidates;   // item indices scored, ascending
  std::vector<double> scores;    // aligned with candidates
  int label_pos = -1;            // label's index within candidates
};

// Intermediate values for inspection tests: attention weights aligned with
// the graph's edge order, gate activations, and the readout vectors.
struct ForwardTrace {
  CategoryAwareGraph graph;
  std::vector<std::array<std::vector<double>, kNumRelations>> attention;  // [layer][relation]
  Tensor h0, hfinal;           // (n_nodes, d)
  Tensor item_gates;           // (n_item_nodes, d)
  Tensor category_gates;       // (n_category_nodes, d)
  Tensor target_gates;         // (1, d)
  Tensor h_v, h_c, h_ct, h_s;  // (1, d)
};

// One example's forward pass held as a live tape. Workers run forward and
// backward concurrently (parameters are only read); the reducer then calls
// accumulate() tape by tape in example order, keeping batch gradients
// deterministic for any worker count.
class ExampleTape {
 public:
  ExampleTape(ModelParams& params, const Example& ex, const CandidateIndex& candidates,
              ForwardTrace* trace = nullptr);

  const ForwardResult& result() const { return result_; }
  void backward() { tape_.backward(loss_); }
  void accumulate(double scale = 1.0) { tape_.accumulate_param_grads(scale); }

 private:
  Tape tape_;
  Tape::Ref loss_ = -1;
  ForwardResult result_;
};

// Forward only; no gradients touched.
ForwardResult forward(ModelParams& params, const Example& ex, const CandidateIndex& candidates,
                      ForwardTrace* trace = nullptr);

// Checkpoint: text header with config and shapes, raw little-endian 64-bit
// float payload per tensor.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace iagnn
