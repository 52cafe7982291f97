#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include "iagnn/data.hpp"

namespace iagnn {

// Edge relations of the per-session heterogeneous graph. ItemSeq carries the
// raw session-order item transitions and is only built on request.
enum class Relation {
  ItemItem = 0,
  CatCat,
  ItemToCat,
  CatToItem,
  ItemToTgt,
  TgtToItem,
  ItemSeq,
};
inline constexpr int kNumRelations = 7;

const char* relation_name(Relation r);

struct Edge {
  int src = -1;
  int dst = -1;
  auto operator<=>(const Edge&) const = default;
};

struct GraphOptions {
  bool category_nodes = true;            // false drops category nodes and all CAT_* edges
  bool original_item_transition = false;  // adds the ItemSeq relation
  bool operator==(const GraphOptions&) const = default;
};

// One graph per training example. Node ids are dense: item nodes first in
// order of first occurrence, then category nodes in order of first
// occurrence, then the single target node.
struct CategoryAwareGraph {
  std::vector<int> item_index;          // item node -> item vocabulary index
  std::vector<int> item_last_position;  // item node -> 1-based last occurrence in prefix
  std::vector<int> category_index;      // category node slot -> category vocabulary index
  int target_category = -1;
  int prefix_len = 0;

  int last_item_node = -1;        // node of the prefix's last item (v_l)
  int last_incat_item_node = -1;  // last item of the target category, else v_l
  int last_cat_node = -1;         // node of the last item's category (c_l), -1 when absent
  int last_incat_cat_node = -1;   // target category's node when visited, else c_l

  // Each list sorted by (dst, src) and deduplicated, so incoming edges of a
  // node form one contiguous run.
  std::array<std::vector<Edge>, kNumRelations> edges;

  int n_item_nodes() const { return static_cast<int>(item_index.size()); }
  int n_category_nodes() const { return static_cast<int>(category_index.size()); }
  int target_node() const { return n_item_nodes() + n_category_nodes(); }
  int n_nodes() const { return target_node() + 1; }
  int category_node(int slot) const { return n_item_nodes() + slot; }
  std::size_t n_edges() const;
  const std::vector<Edge>& relation_edges(Relation r) const {
    return edges[static_cast<int>(r)];
  }

  bool operator==(const CategoryAwareGraph&) const = default;
};

// Pure: the same example and options always produce an identical graph.
CategoryAwareGraph build_graph(const Example& ex, const GraphOptions& opts = {});

// Line-based debug dump: `NODE kind id payload` then `EDGE relation src dst`.
void dump_graph(std::ostream& out, const CategoryAwareGraph& g);

}  // namespace iagnn
