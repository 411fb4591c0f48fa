#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kserver/rational.hpp"
#include "kserver/tree.hpp"

namespace kserver {

// Mass distribution over a tree stored as exact subtree aggregates z_u with a
// single common denominator: z_u = numerator_u / M.  An inner measure obeys
// z_u >= sum of children's z_c; a leaf measure additionally holds no mass at
// internal nodes.  Immutable value type.
class MassVector {
 public:
  static MassVector from_aggregates(TreePtr tree, const std::vector<Rat>& agg);
  // Leaf masses in leaves() order; internal aggregates derived.
  static MassVector from_leaf_masses(TreePtr tree, const std::vector<Rat>& leaf_masses);
  // Integral leaf measure induced by a server configuration.
  static MassVector from_config(TreePtr tree, const ServerConfiguration& c);

  const TreePtr& tree() const { return tree_; }
  int node_count() const { return static_cast<int>(num_.size()); }
  const Int& denominator() const { return den_; }
  const Int& numerator(int u) const { return num_[u]; }

  // Subtree aggregate z_u.
  Rat value(int u) const { return Rat(num_[u], den_); }
  // Point mass z_[u] = z_u - sum of children aggregates.
  Rat point_mass(int u) const;
  // Total mass z_r.
  Rat mass() const { return Rat(num_[0], den_); }

  // Leaf masses in leaves() order.
  std::vector<Rat> leaf_masses() const;

  bool operator==(const MassVector& other) const;

  // {"denominator":"..","numerators":["..",..]} in node order.
  std::string debug_json() const;

 private:
  MassVector(TreePtr tree, Int den, std::vector<Int> num);

  TreePtr tree_;
  Int den_ = 1;
  std::vector<Int> num_;
};

enum class MeasureKind { Inner, Leaf };

struct MeasureViolation {
  std::string code;  // RootMass | NegativeAggregate | SupersetConstraint |
                     // InternalMass | NotBarely
  int node = -1;
  std::string detail;
};

// Checks membership in the measure class: inner/leaf structure, declared total
// mass, and (when barely_m > 0) that every aggregate is a multiple of
// 1/barely_m.  Returns the first violation instead of throwing.
std::optional<MeasureViolation> validate(const MassVector& z, MeasureKind kind,
                                         const Rat& expected_mass,
                                         const Int& barely_m = Int(0));

// The flooring map sigma(x) = floor(x) + 2 * max(0, x - floor(x) - 1/2):
// monotone, 2-Lipschitz, fixes integers, collapses [l, l+1/2] to l, and maps
// multiples of 1/(2m) to multiples of 1/m.
Rat sigma(const Rat& x);

// sigma applied to every subtree aggregate.  Superadditivity of sigma keeps
// the result a valid inner measure.
MassVector sigma_map(const MassVector& z);

// Optimal transport distance between equal-mass measures on the same tree:
// sum over non-root nodes of w_u * |z_u - z'_u|.
Rat ot_distance(const MassVector& a, const MassVector& b);

// Positive part of the movement from a to b: sum of w_u * max(z'_u - z_u, 0).
// Exactly half of ot_distance when masses agree.
Rat positive_movement(const MassVector& from, const MassVector& to);

}  // namespace kserver
