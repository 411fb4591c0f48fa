#pragma once

#include <vector>

#include "kserver/metric_space.hpp"
#include "kserver/random_bits.hpp"
#include "kserver/tree.hpp"

namespace kserver {

// Result of one random tree embedding: the HST plus the leaf/point bijection.
struct Embedding {
  TauHST hst;
  std::vector<int> point_to_leaf;  // metric point -> leaf node id
  std::vector<int> leaf_to_point;  // node id -> point, -1 for internal nodes
};

// Random HST embedding of a finite metric: random permutation plus a
// log-uniform radius scale, cluster radii D*beta*tau^-i per level.  The
// returned tree never contracts a pairwise distance (checked exactly), and
// leaf_distance(p, q) = O(tau log n) * dist(p, q) in expectation.
// Requires tau >= 10.
Embedding frt_embed(const MetricSpace& metric, const Rat& tau, BitStream& bits);

}  // namespace kserver
