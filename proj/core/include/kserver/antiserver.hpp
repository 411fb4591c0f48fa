#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kserver/measure.hpp"
#include "kserver/rational.hpp"
#include "kserver/tree.hpp"

namespace kserver {

// Indexing for the coordinate set X = {(u,j) | u in V, 1 <= j <= n_u} where
// n_u counts the leaves under u.  Coordinates of one node are contiguous.
class CoordinateLayout {
 public:
  explicit CoordinateLayout(const WeightedTree& tree);

  int dimension() const { return dim_; }
  int count(int u) const { return count_[u]; }          // n_u
  int index(int u, int j) const { return offset_[u] + j - 1; }  // j is 1-based
  int node_of(int idx) const { return node_of_[idx]; }
  int coord_of(int idx) const { return coord_of_[idx]; }  // 1-based j

 private:
  int dim_ = 0;
  std::vector<int> offset_;
  std::vector<int> count_;
  std::vector<int> node_of_;
  std::vector<int> coord_of_;
};

// A candidate point of the anti-server polytope.  x_{uj} ~ "the subtree of u
// is missing its j-th server": 0 when present, 1 when absent, fractional in
// between.  Values are exact rationals.
struct AntiServerPoint {
  TreePtr tree;
  int k = 0;
  std::vector<Rat> x;  // CoordinateLayout order

  Rat at(const CoordinateLayout& layout, int u, int j) const {
    return x[layout.index(u, j)];
  }
};

// A violated inequality c.x <= c.y - violated_by, with |c|_inf = 1.
struct SeparationCut {
  std::vector<Rat> coeffs;  // dense, CoordinateLayout order
  Rat violated_by;
  std::string constraint;  // "Box" | "Root" | "Prefix" | "DeltaFloor"
  int node = -1;
};

// Feasible (nullopt) when every box, root, and sorted-prefix constraint is
// violated by at most gamma; otherwise the most violated constraint as a cut.
// Checks membership in P; the delta floor of P_delta is handled by callers.
std::optional<SeparationCut> separation_oracle(const AntiServerPoint& x,
                                               const Rat& gamma);

// Exhaustive variant for tests: enumerates every subset S of child
// coordinates at every internal node instead of sorting.  Exponential.
std::optional<SeparationCut> separation_oracle_exhaustive(const AntiServerPoint& x,
                                                          const Rat& gamma);

// Floating-point cut with coefficients in {-1, 0, +1}.
struct DenseCut {
  std::vector<double> coeffs;  // dense, CoordinateLayout order
  double violated_by = 0.0;
};

// Double-precision replica of separation_oracle for solver inner loops where
// exact arithmetic is too slow.  Same constraint families, same most-violated
// selection; tolerances far above double roundoff keep verdicts reliable.
std::optional<DenseCut> separation_oracle_dense(const WeightedTree& tree, int k,
                                                const std::vector<double>& x,
                                                double gamma);

// Integral encoding of a configuration: x_{uj} = 0 iff L_u holds >= j servers.
AntiServerPoint from_config(TreePtr tree, int k, const ServerConfiguration& c);

// delta = 1/(2k+1), the request-pinning value of P_delta.
Rat delta_for(int k);

// Leaf measure z_l = (1 - x_{l1}) / (1 - delta), total mass k + 1/2 when the
// mass condition sum_l x_{l1} = n - k holds.  The measure is renormalized to
// exactly k + 1/2 when the condition only holds within `tolerance`.
MassVector to_leaf_measure(const AntiServerPoint& x, const Rat& tolerance);

// Bregman divergence of Eq-style entropic type, evaluated in floating point:
// D(x||x') = sum_{u != r} w_u * sum_j ((x+d)log((x+d)/(x'+d)) - x + x').
double divergence(const AntiServerPoint& x, const AntiServerPoint& x_prime);

// Partial derivatives w_u * log((x_{uj}+delta)/(x'_{uj}+delta)).
std::vector<double> divergence_gradient(const AntiServerPoint& x,
                                        const AntiServerPoint& x_prime);

// Sum of w_u * max(x_{uj} - x'_{uj}, 0): the movement "paid" by coordinates
// that went up from x' ... direction per contract: positive part of x - x'.
Rat positive_movement(const AntiServerPoint& x, const AntiServerPoint& x_prime);

// Nearest-effort projection of a near-feasible candidate into P_delta.
// Root-down: clamps box/delta/root bounds, then lifts the smallest child
// coordinates until every sorted-prefix constraint holds exactly.  When
// pinned_leaf >= 0, coordinate (pinned_leaf, 1) is held at exactly delta and
// ancestor capacities account for it.  Output passes separation_oracle at
// gamma = 0 (and the delta floor); throws Error("NotNear") otherwise.
AntiServerPoint repair_into_polytope(const AntiServerPoint& y, const Rat& eta,
                                     int pinned_leaf = -1);

}  // namespace kserver
