#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kserver/measure.hpp"
#include "kserver/random_bits.hpp"
#include "kserver/rational.hpp"
#include "kserver/tree.hpp"

namespace kserver {

// A barely-random server state: m deterministic configurations tracked next
// to the barely-fractional measure they realize.  Invariants (checked after
// every elementary move, exact arithmetic):
//   consistency:  z_u = (1/m) * sum_i n_u(R_i) at every node u,
//   balancedness: n_u(R_i) in {floor(z_u), ceil(z_u)} for every u and i,
// where n_u(C) counts the servers of C in the subtree of u.  Single owner,
// mutable during a trajectory.
struct Ensemble {
  TreePtr tree;
  long long m = 0;
  std::vector<ServerConfiguration> members;  // leaves kept sorted ascending
  MassVector z;                              // companion measure
  std::vector<Rat> member_cost;              // cumulative distance per member
};

// All members equal to the start configuration, companion measure integral.
Ensemble ensemble_init(TreePtr tree, long long m,
                       const ServerConfiguration& start);

struct EnsembleViolation {
  std::string code;  // ConsistencyViolation | BalanceViolation
  int node = -1;
  int member = -1;
};

// First invariant violation, or nullopt if consistent and balanced.
std::optional<EnsembleViolation> ensemble_check(const Ensemble& e);

// Weighted distance to balancedness:
//   G = (1/m) * sum_v w_v * sum_i min(|n_v(R_i)-floor(z_v)|,
//                                     |n_v(R_i)-ceil(z_v)|).
// Zero exactly when the ensemble is balanced.
Rat balance_gap(const Ensemble& e);

// Decomposes the change from `a` to `b` (leaf measures of equal mass, both
// in multiples of 1/m) into ordered leaf-to-leaf moves of mass 1/m whose
// path lengths sum to exactly OT(a, b): every tree edge is crossed in its
// net direction only.  Matching is bottom-up, smallest leaf ids first.
// Throws MassMismatch when the masses differ.
std::vector<std::pair<int, int>> elementary_moves(const MassVector& a,
                                                  const MassVector& b,
                                                  long long m);

// Applies one elementary move of mass 1/m from leaf `from` to leaf `to`:
// either a direct server transfer in a member that can spare one at `from`
// and absorb one at `to`, or a three-leaf swap between a member holding both
// and a member holding neither, followed by rebalancing below their lowest
// common ancestor.  Updates the companion measure, verifies both invariants,
// and returns the total server distance moved (all members, unweighted).
// Throws NoCandidate if the swap partner promised by balancedness is absent.
Rat apply_elementary(Ensemble& e, int from, int to);

// Restores balancedness below `from` (whose own subtree count must already
// be balanced in every member), processing descendants top-down.  At an
// imbalanced node v the member with the highest count swaps one server in
// the subtree of v against one server a sibling subtree of v, taken from the
// member with the lowest count; each exchange shrinks the count spread at v
// and never unbalances a node outside the subtree of v's parent.  Returns
// the total server distance moved.  Throws ExchangeUnavailable if no such
// exchange exists (possible only when the precondition is violated).
Rat rebalance(Ensemble& e, int from);

// One trajectory step: decomposes the change into elementary moves and
// applies them in order.  Returns the per-member average distance moved,
// (1/m) * sum_i d(R_i, R_i'); the companion measure becomes z_next.
Rat advance(Ensemble& e, const MassVector& z_next);

// Barely-random server positions for a path-shaped tree, computed directly
// from the measure: member i places its h-th server at the deepest path node
// u with z_u + (i-1)/m >= h.  Stateless; the result is consistent and
// balanced, every node holding a full unit of mass is occupied by every
// member, and along a trajectory the average member movement never exceeds
// the transport cost of the measure.  Configurations may occupy internal
// path nodes.  Throws NotAPath unless every node has at most one child.
Ensemble round_line(const MassVector& z, long long m);

// Outcome of drawing one member index from a bit stream.
struct SampleDraw {
  long long index = 0;
  int bits_used = 0;    // always exactly ceil(log2 m)
  bool fallback = false;  // deterministic mod-m reduction was taken
};

// Draws a member index from exactly ceil(log2 m) fresh bits.  Out-of-range
// values are recycled deterministically (a fixed permutation of the bit
// space) up to eight times, then reduced mod m; no further bits are ever
// consumed, so the count is independent of the trajectory length.  The
// fallback path is taken with probability below 2^-8, which bounds the
// distance from uniformity.
SampleDraw sample_member(BitStream& bits, long long m);

// Smallest cumulative member cost: what an advice tape selecting the best
// member in hindsight would pay.  At most average_cost.
Rat advised_cost(const Ensemble& e);

// Mean cumulative member cost: the cost of the uniform mixture.
Rat average_cost(const Ensemble& e);

// {"m":..,"members":[[leaf,..],..],"member_cost":[..],"z":{..}} snapshot.
std::string ensemble_json(const Ensemble& e);

}  // namespace kserver
