#pragma once

#include <memory>
#include <string>
#include <vector>

#include "kserver/rational.hpp"

namespace kserver {

// Rooted tree with rational edge weights.  Node u carries the weight of the
// edge (p(u), u); the root's weight is 0.  Node 0 is always the root.
// Immutable after construction, safe to share across threads.
class WeightedTree {
 public:
  struct Node {
    int parent = -1;
    Rat weight;
    std::vector<int> children;
  };

  // parents[0] must be -1; every other parent must be a valid node id.
  // weights[u] is the weight of edge (parents[u], u); weights[0] is ignored.
  WeightedTree(std::vector<int> parents, std::vector<Rat> weights);

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int root() const { return 0; }
  int parent(int u) const { return nodes_[u].parent; }
  const Rat& weight(int u) const { return nodes_[u].weight; }
  const std::vector<int>& children(int u) const { return nodes_[u].children; }
  bool is_leaf(int u) const { return nodes_[u].children.empty(); }
  bool is_internal(int u) const { return !nodes_[u].children.empty(); }
  int depth(int u) const { return depth_[u]; }

  // Childless nodes in ascending id order.
  const std::vector<int>& leaves() const { return leaves_; }
  int leaf_count() const { return static_cast<int>(leaves_.size()); }
  // Position of a leaf in leaves(), or -1 if u is internal.
  int leaf_index(int u) const { return leaf_index_[u]; }

  // Root-first order with every parent before its children.
  const std::vector<int>& top_down_order() const { return bfs_; }

  bool is_ancestor_or_self(int anc, int u) const;
  int lca(int u, int v) const;

  // Sum of edge weights on the connecting path (through the LCA).
  Rat leaf_distance(int leaf_a, int leaf_b) const;

  // Largest leaf-to-leaf distance.
  Rat diameter() const;

  static bool same_structure(const WeightedTree& a, const WeightedTree& b);

  // JSON object {"nodes":[{"id":..,"parent":..,"weight":".."},...],
  //              "leaves":[..]} with deterministic ordering.
  std::string to_json() const;
  static WeightedTree from_json(const std::string& text);

 private:
  std::vector<Node> nodes_;
  std::vector<int> depth_;
  std::vector<int> leaves_;
  std::vector<int> leaf_index_;
  std::vector<int> bfs_;
};

using TreePtr = std::shared_ptr<const WeightedTree>;

TreePtr make_tree(std::vector<int> parents, std::vector<Rat> weights);

// Multiset of k leaf ids, kept sorted ascending.
struct ServerConfiguration {
  std::vector<int> leaves;

  explicit ServerConfiguration(std::vector<int> ls = {});
  int k() const { return static_cast<int>(leaves.size()); }
  // Number of servers at leaf l (multiplicity).
  int count_at(int leaf) const;
  bool operator==(const ServerConfiguration& other) const = default;
};

// Servers of C inside the subtree of u, counted with multiplicity.
int servers_below(const WeightedTree& tree, const ServerConfiguration& c, int u);

// Min-weight matching distance between equal-size configurations on a tree:
// sum over non-root nodes of w_u * |n_u(C) - n_u(C')|.
Rat config_distance(const WeightedTree& tree, const ServerConfiguration& a,
                    const ServerConfiguration& b);

// A WeightedTree whose edge weights grow by a factor tau per level upward and
// whose leaves sit at equal depth.
struct TauHST {
  TreePtr tree;
  Rat tau;
};

// Checks the per-edge ratio (w_u = tau * w_v for every non-root internal u
// with child v) and equal leaf depth.  Throws Error("RatioViolation") or
// Error("UnequalLeafDepth") naming the first offender.
TauHST validate_hst(TreePtr tree, const Rat& tau);

}  // namespace kserver
