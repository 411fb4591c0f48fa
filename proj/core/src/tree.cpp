#include "kserver/tree.hpp"

#include <algorithm>
#include <deque>

#include <nlohmann/json.hpp>

#include "kserver/error.hpp"

namespace kserver {

WeightedTree::WeightedTree(std::vector<int> parents, std::vector<Rat> weights) {
  const int n = static_cast<int>(parents.size());
  if (n == 0) throw Error("EmptyTree", "a tree needs at least one node");
  if (weights.size() != parents.size())
    throw Error("SizeMismatch", "parents and weights differ in length");
  if (parents[0] != -1) throw Error("BadRoot", "node 0 must have parent -1");

  nodes_.resize(n);
  for (int u = 0; u < n; ++u) {
    if (u > 0 && (parents[u] < 0 || parents[u] >= n || parents[u] == u))
      throw Error("BadParent", "node " + std::to_string(u));
    if (u > 0 && weights[u] < 0)
      throw Error("NegativeWeight", "node " + std::to_string(u));
    nodes_[u].parent = parents[u];
    nodes_[u].weight = (u == 0) ? Rat(0) : weights[u];
    if (u > 0) nodes_[parents[u]].children.push_back(u);
  }

  // Depth assignment doubles as an acyclicity/reachability check.
  depth_.assign(n, -1);
  depth_[0] = 0;
  bfs_.reserve(n);
  std::deque<int> queue{0};
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    bfs_.push_back(u);
    for (int c : nodes_[u].children) {
      depth_[c] = depth_[u] + 1;
      queue.push_back(c);
    }
  }
  if (static_cast<int>(bfs_.size()) != n)
    throw Error("Disconnected", "not every node reaches the root");

  leaf_index_.assign(n, -1);
  for (int u = 0; u < n; ++u) {
    if (nodes_[u].children.empty()) {
      leaf_index_[u] = static_cast<int>(leaves_.size());
      leaves_.push_back(u);
    }
  }
}

bool WeightedTree::is_ancestor_or_self(int anc, int u) const {
  while (u != -1 && depth_[u] >= depth_[anc]) {
    if (u == anc) return true;
    u = nodes_[u].parent;
  }
  return false;
}

int WeightedTree::lca(int u, int v) const {
  while (depth_[u] > depth_[v]) u = nodes_[u].parent;
  while (depth_[v] > depth_[u]) v = nodes_[v].parent;
  while (u != v) {
    u = nodes_[u].parent;
    v = nodes_[v].parent;
  }
  return u;
}

Rat WeightedTree::leaf_distance(int leaf_a, int leaf_b) const {
  if (leaf_a < 0 || leaf_a >= node_count() || !is_leaf(leaf_a))
    throw Error("UnknownLeaf", std::to_string(leaf_a));
  if (leaf_b < 0 || leaf_b >= node_count() || !is_leaf(leaf_b))
    throw Error("UnknownLeaf", std::to_string(leaf_b));
  const int meet = lca(leaf_a, leaf_b);
  Rat total = 0;
  for (int u = leaf_a; u != meet; u = nodes_[u].parent) total += nodes_[u].weight;
  for (int u = leaf_b; u != meet; u = nodes_[u].parent) total += nodes_[u].weight;
  return total;
}

Rat WeightedTree::diameter() const {
  Rat best = 0;
  for (std::size_t i = 0; i < leaves_.size(); ++i)
    for (std::size_t j = i + 1; j < leaves_.size(); ++j)
      best = std::max(best, leaf_distance(leaves_[i], leaves_[j]));
  return best;
}

bool WeightedTree::same_structure(const WeightedTree& a, const WeightedTree& b) {
  if (&a == &b) return true;
  if (a.node_count() != b.node_count()) return false;
  for (int u = 0; u < a.node_count(); ++u) {
    if (a.parent(u) != b.parent(u)) return false;
    if (a.weight(u) != b.weight(u)) return false;
  }
  return true;
}

std::string WeightedTree::to_json() const {
  nlohmann::ordered_json doc;
  doc["nodes"] = nlohmann::ordered_json::array();
  for (int u = 0; u < node_count(); ++u) {
    nlohmann::ordered_json item;
    item["id"] = u;
    item["parent"] = nodes_[u].parent;
    item["weight"] = rat_to_string(nodes_[u].weight);
    doc["nodes"].push_back(item);
  }
  doc["leaves"] = leaves_;
  return doc.dump();
}

WeightedTree WeightedTree::from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  const auto& items = doc.at("nodes");
  std::vector<int> parents(items.size());
  std::vector<Rat> weights(items.size());
  for (const auto& item : items) {
    const int id = item.at("id").get<int>();
    if (id < 0 || id >= static_cast<int>(items.size()))
      throw Error("BadNodeId", std::to_string(id));
    parents[id] = item.at("parent").get<int>();
    weights[id] = rat_from_string(item.at("weight").get<std::string>());
  }
  return WeightedTree(std::move(parents), std::move(weights));
}

TreePtr make_tree(std::vector<int> parents, std::vector<Rat> weights) {
  return std::make_shared<const WeightedTree>(std::move(parents), std::move(weights));
}

ServerConfiguration::ServerConfiguration(std::vector<int> ls) : leaves(std::move(ls)) {
  std::sort(leaves.begin(), leaves.end());
}

int ServerConfiguration::count_at(int leaf) const {
  const auto lo = std::lower_bound(leaves.begin(), leaves.end(), leaf);
  const auto hi = std::upper_bound(leaves.begin(), leaves.end(), leaf);
  return static_cast<int>(hi - lo);
}

int servers_below(const WeightedTree& tree, const ServerConfiguration& c, int u) {
  int total = 0;
  for (int leaf : c.leaves)
    if (tree.is_ancestor_or_self(u, leaf)) ++total;
  return total;
}

Rat config_distance(const WeightedTree& tree, const ServerConfiguration& a,
                    const ServerConfiguration& b) {
  if (a.k() != b.k())
    throw Error("SizeMismatch", std::to_string(a.k()) + " vs " + std::to_string(b.k()));
  std::vector<int> diff(tree.node_count(), 0);
  for (int leaf : a.leaves)
    for (int u = leaf; u != -1; u = tree.parent(u)) ++diff[u];
  for (int leaf : b.leaves)
    for (int u = leaf; u != -1; u = tree.parent(u)) --diff[u];
  Rat total = 0;
  for (int u = 1; u < tree.node_count(); ++u)
    if (diff[u] != 0) total += tree.weight(u) * (diff[u] > 0 ? diff[u] : -diff[u]);
  return total;
}

TauHST validate_hst(TreePtr tree, const Rat& tau) {
  if (!tree) throw Error("EmptyTree", "null tree");
  if (tau < 1) throw Error("BadTau", rat_to_string(tau));
  const WeightedTree& t = *tree;
  for (int u = 1; u < t.node_count(); ++u) {
    if (!t.is_internal(u)) continue;
    for (int v : t.children(u)) {
      if (t.weight(u) != tau * t.weight(v))
        throw Error("RatioViolation",
                    "edge (" + std::to_string(u) + "," + std::to_string(v) + ")");
    }
  }
  const auto& ls = t.leaves();
  for (std::size_t i = 1; i < ls.size(); ++i) {
    if (t.depth(ls[i]) != t.depth(ls[0]))
      throw Error("UnequalLeafDepth",
                  std::to_string(ls[0]) + " vs " + std::to_string(ls[i]));
  }
  return TauHST{std::move(tree), tau};
}

}  // namespace kserver
