#include "iagnn/graph.hpp"

#include <algorithm>
#include <ostream>
#include <unordered_map>

#include "iagnn/errors.hpp"

namespace iagnn {

const char* relation_name(Relation r) {
  switch (r) {
    case Relation::ItemItem: return "ITEM_ITEM";
    case Relation::CatCat: return "CAT_CAT";
    case Relation::ItemToCat: return "ITEM_TO_CAT";
    case Relation::CatToItem: return "CAT_TO_ITEM";
    case Relation::ItemToTgt: return "ITEM_TO_TGT";
    case Relation::TgtToItem: return "TGT_TO_ITEM";
    case Relation::ItemSeq: return "ITEM_SEQ";
  }
  return "UNKNOWN";
}

std::size_t CategoryAwareGraph::n_edges() const {
  std::size_t n = 0;
  for (const auto& e : edges) n += e.size();
  return n;
}

namespace {

void sort_dedup(std::vector<Edge>& es) {
  std::sort(es.begin(), es.end(),
            [](const Edge& a, const Edge& b) { return std::tie(a.dst, a.src) < std::tie(b.dst, b.src); });
  es.erase(std::unique(es.begin(), es.end()), es.end());
}

}  // namespace

CategoryAwareGraph build_graph(const Example& ex, const GraphOptions& opts) {
  const int n = static_cast<int>(ex.prefix_items.size());
  if (n == 0) throw DataError("build_graph: empty prefix");

  CategoryAwareGraph g;
  g.target_category = ex.target_category;
  g.prefix_len = n;

  // item nodes in first-occurrence order; remember the last occurrence
  std::unordered_map<int, int> item_node;
  std::vector<int> node_of_pos(n);
  for (int i = 0; i < n; ++i) {
    auto [it, fresh] = item_node.try_emplace(ex.prefix_items[i], g.n_item_nodes());
    if (fresh) {
      g.item_index.push_back(ex.prefix_items[i]);
      g.item_last_position.push_back(i + 1);
    } else {
      g.item_last_position[it->second] = i + 1;
    }
    node_of_pos[i] = it->second;
  }
  const int n_items = g.n_item_nodes();

  std::unordered_map<int, int> cat_slot;
  std::vector<int> cat_node_of_pos(n, -1);
  if (opts.category_nodes) {
    for (int i = 0; i < n; ++i) {
      auto [it, fresh] = cat_slot.try_emplace(ex.prefix_categories[i], g.n_category_nodes());
      if (fresh) g.category_index.push_back(ex.prefix_categories[i]);
      cat_node_of_pos[i] = n_items + it->second;
    }
  }
  const int target = g.target_node();

  auto& item_item = g.edges[static_cast<int>(Relation::ItemItem)];
  for (int v = 0; v < n_items; ++v) item_item.push_back({v, v});
  // next-in-category transitions: consecutive entries of each per-category
  // subsequence; duplicates collapse into the standing self-loop
  std::unordered_map<int, int> prev_pos_in_cat;
  for (int i = 0; i < n; ++i) {
    auto it = prev_pos_in_cat.find(ex.prefix_categories[i]);
    if (it != prev_pos_in_cat.end() && node_of_pos[it->second] != node_of_pos[i])
      item_item.push_back({node_of_pos[it->second], node_of_pos[i]});
    prev_pos_in_cat[ex.prefix_categories[i]] = i;
  }

  if (opts.category_nodes) {
    auto& cat_cat = g.edges[static_cast<int>(Relation::CatCat)];
    for (int c = 0; c < g.n_category_nodes(); ++c) cat_cat.push_back({n_items + c, n_items + c});
    for (int i = 0; i + 1 < n; ++i)
      if (cat_node_of_pos[i] != cat_node_of_pos[i + 1])
        cat_cat.push_back({cat_node_of_pos[i], cat_node_of_pos[i + 1]});

    auto& item_to_cat = g.edges[static_cast<int>(Relation::ItemToCat)];
    auto& cat_to_item = g.edges[static_cast<int>(Relation::CatToItem)];
    for (int i = 0; i < n; ++i) {
      item_to_cat.push_back({node_of_pos[i], cat_node_of_pos[i]});
      cat_to_item.push_back({cat_node_of_pos[i], node_of_pos[i]});
    }
  }

  auto& item_to_tgt = g.edges[static_cast<int>(Relation::ItemToTgt)];
  auto& tgt_to_item = g.edges[static_cast<int>(Relation::TgtToItem)];
  for (int v = 0; v < n_items; ++v) {
    item_to_tgt.push_back({v, target});
    tgt_to_item.push_back({target, v});
  }

  if (opts.original_item_transition) {
    auto& item_seq = g.edges[static_cast<int>(Relation::ItemSeq)];
    for (int i = 0; i + 1 < n; ++i)
      if (node_of_pos[i] != node_of_pos[i + 1])
        item_seq.push_back({node_of_pos[i], node_of_pos[i + 1]});
  }

  for (auto& es : g.edges) sort_dedup(es);

  g.last_item_node = node_of_pos[n - 1];
  g.last_incat_item_node = g.last_item_node;
  for (int i = n - 1; i >= 0; --i) {
    if (ex.prefix_categories[i] == ex.target_category) {
      g.last_incat_item_node = node_of_pos[i];
      break;
    }
  }
  if (opts.category_nodes) {
    g.last_cat_node = cat_node_of_pos[n - 1];
    auto it = cat_slot.find(ex.target_category);
    g.last_incat_cat_node = it != cat_slot.end() ? n_items + it->second : g.last_cat_node;
  }
  return g;
}

void dump_graph(std::ostream& out, const CategoryAwareGraph& g) {
  for (int v = 0; v < g.n_item_nodes(); ++v)
    out << "NODE item " << v << " " << g.item_index[v] << " " << g.item_last_position[v] << "\n";
  for (int c = 0; c < g.n_category_nodes(); ++c)
    out << "NODE category " << g.category_node(c) << " " << g.category_index[c] << "\n";
  out << "NODE target " << g.target_node() << " " << g.target_category << "\n";
  for (int r = 0; r < kNumRelations; ++r)
    for (const Edge& e : g.edges[r])
      out << "EDGE " << relation_name(static_cast<Relation>(r)) << " " << e.src << " " << e.dst
          << "\n";
}

}  // namespace iagnn
