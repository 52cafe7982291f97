#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "iagnn/tensor.hpp"

namespace iagnn {

// A named learnable tensor living outside any tape. Gradients accumulate
// across tapes until zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool sparse_rows = false;   // row-gathered table; the optimizer updates touched rows only
  std::vector<int> touched;   // rows with pending gradient, duplicates allowed

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool sparse = false)
      : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols),
        sparse_rows(sparse) {}

  void zero_grad();
};

// Reverse-mode tape over Tensor values. Nodes are created in topological
// order, so backward() walks them in reverse exactly once; a second walk
// would re-propagate already-propagated gradients, so backward() is
// single-shot per tape. backward() fills node-local gradients;
// accumulate_param_grads() folds them into the bound Parameters, so a batch
// reducer can apply per-example tapes in a fixed order.
class Tape {
 public:
  using Ref = std::int32_t;

  // leaves
  Ref constant(Tensor v);  // gradient not propagated anywhere
  Ref param(Parameter& p);
  Ref gather_rows(Parameter& table, std::vector<int> idx);

  // structure
  Ref matmul(Ref a, Ref b);
  Ref transpose(Ref a);
  Ref concat_cols(const std::vector<Ref>& xs);
  Ref concat_rows(const std::vector<Ref>& xs);
  Ref slice_rows(Ref a, int row0, int nrows);
  Ref gather_node_rows(Ref a, std::vector<int> idx);
  // rows of a added into a zero (out_rows x cols) tensor at positions dst
  Ref scatter_add_rows(Ref a, std::vector<int> dst, int out_rows);

  // elementwise
  Ref add(Ref a, Ref b);
  Ref sub(Ref a, Ref b);
  Ref mul(Ref a, Ref b);
  Ref scale_rows(Ref m, Ref col);  // row i of m times col[i], col is (rows, 1)
  Ref sigmoid(Ref a);
  Ref leaky_relu(Ref a, double negative_slope);

  // reductions
  Ref sum_all(Ref a);    // (1, 1)
  Ref mean_rows(Ref a);  // (1, cols)

  // segmented ops over contiguous segments given by offsets (size S+1,
  // offsets[0] = 0, offsets[S] = rows, strictly increasing; empty segments fatal)
  Ref segment_softmax(Ref scores, std::vector<int> offsets);  // scores (E, 1)
  Ref segment_sum_rows(Ref a, std::vector<int> offsets);      // (S, cols)

  // losses over a score column (K, 1)
  Ref neg_log_softmax(Ref scores, int label_pos);
  Ref bce_with_logits(Ref scores, int label_pos);

  const Tensor& value(Ref r) const { return nodes_[r].value; }
  const Tensor& grad(Ref r) const { return nodes_[r].grad; }

  // root must be scalar; seeds d(root)/d(root) = seed
  void backward(Ref root, double seed = 1.0);
  // folds tape-local gradients into bound Parameter::grad (and touched rows)
  void accumulate_param_grads(double scale = 1.0);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, Node&)> back;  // empty for leaves
  };

  struct DenseUse {
    Parameter* p;
    Ref node;
  };
  struct GatherUse {
    Parameter* table;
    std::vector<int> idx;
    Ref node;
  };

  Ref push(Tensor value, std::function<void(Tape&, Node&)> back);
  Node& node(Ref r) { return nodes_[r]; }

  std::vector<Node> nodes_;
  bool backward_ran_ = false;
  std::vector<DenseUse> dense_uses_;
  std::vector<GatherUse> gather_uses_;
};

}  // namespace iagnn
