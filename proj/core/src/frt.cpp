#include "kserver/frt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kserver/error.hpp"

namespace kserver {

namespace {

// Log-uniform scale in [1, tau): tau^U for U uniform on [0,1), converted to
// an exact dyadic rational so that all radius comparisons stay exact.
Rat draw_beta(const Rat& tau, BitStream& bits) {
  const double u = bits.unit_double(24);
  const double t = rat_to_double(tau);
  double beta = std::pow(t, u);
  beta = std::min(std::max(beta, 1.0), t * 0.999);
  return rat_from_double(beta);
}

}  // namespace

Embedding frt_embed(const MetricSpace& metric, const Rat& tau, BitStream& bits) {
  if (tau < 10) throw Error("BadTau", "embedding base must be >= 10");
  const int n = metric.n();

  if (n == 1) {
    auto tree = make_tree({-1}, {Rat(0)});
    Embedding out{TauHST{tree, tau}, {0}, {0}};
    return out;
  }

  // Random permutation: earlier points win ties for cluster centers.
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(bits.uniform(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }
  std::vector<int> rank(n);
  for (int i = 0; i < n; ++i) rank[perm[i]] = i;

  const Rat beta = draw_beta(tau, bits);
  const Rat big_d(metric.diameter());

  std::vector<int> parents{-1};
  std::vector<Rat> weights{Rat(0)};
  // Clusters alive at the current level: owning node plus member points.
  struct Cluster {
    int node;
    std::vector<int> points;
  };
  std::vector<Cluster> frontier;
  {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    frontier.push_back({0, std::move(all)});
  }

  Rat radius = beta * big_d;  // level-0 radius; level i uses radius / tau^i
  std::vector<int> point_to_leaf(n, -1);
  for (int level = 1;; ++level) {
    radius /= tau;
    const Rat edge_weight = radius * tau;  // = beta * D * tau^(1-level)
    std::vector<Cluster> next;
    for (const Cluster& cl : frontier) {
      // Assign each member to the first permutation point within the radius.
      // Grouping by that center splits the cluster.
      std::vector<std::pair<int, int>> assigned;  // (center, point)
      for (int p : cl.points) {
        int center = -1;
        for (int i = 0; i < n; ++i) {
          if (Rat(metric.dist(p, perm[i])) <= radius) {
            center = perm[i];
            break;
          }
        }
        // p itself is always within radius 0 <= radius of itself only when
        // radius >= 0; distances to self are 0, so a center always exists.
        assigned.emplace_back(center, p);
      }
      std::sort(assigned.begin(), assigned.end());
      std::size_t i = 0;
      while (i < assigned.size()) {
        std::size_t j = i;
        Cluster child;
        child.node = static_cast<int>(parents.size());
        parents.push_back(cl.node);
        weights.push_back(edge_weight);
        while (j < assigned.size() && assigned[j].first == assigned[i].first) {
          child.points.push_back(assigned[j].second);
          ++j;
        }
        next.push_back(std::move(child));
        i = j;
      }
    }
    frontier = std::move(next);
    if (radius < 1) {
      // Every cluster is now a singleton: distances are >= 1, so only the
      // point itself can sit within the radius.
      for (const Cluster& cl : frontier) {
        if (cl.points.size() != 1)
          throw Error("EmbeddingBug", "non-singleton cluster at the leaf level");
        point_to_leaf[cl.points[0]] = cl.node;
      }
      break;
    }
  }

  auto tree = make_tree(std::move(parents), std::move(weights));
  std::vector<int> leaf_to_point(tree->node_count(), -1);
  for (int p = 0; p < n; ++p) leaf_to_point[point_to_leaf[p]] = p;

  // Hard invariant: the embedding never contracts a distance.  Exact check.
  for (int p = 0; p < n; ++p) {
    for (int q = p + 1; q < n; ++q) {
      if (tree->leaf_distance(point_to_leaf[p], point_to_leaf[q]) <
          Rat(metric.dist(p, q)))
        throw Error("EmbeddingBug", "contracted pair (" + std::to_string(p) +
                                        "," + std::to_string(q) + ")");
    }
  }

  TauHST hst = validate_hst(tree, tau);
  return Embedding{std::move(hst), std::move(point_to_leaf), std::move(leaf_to_point)};
}

}  // namespace kserver
