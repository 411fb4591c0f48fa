#pragma once

#include "kserver/antiserver.hpp"
#include "kserver/measure.hpp"
#include "kserver/tree.hpp"

namespace kserver {

// Online fractional k-server state on a tau-HST: the anti-server point is
// projected (in Bregman divergence) onto the polytope with the requested
// leaf coordinate pinned at delta, then converted to a k-mass leaf measure.
struct FractionalState {
  TauHST hst;
  int k = 0;
  AntiServerPoint x;    // always exactly inside the delta-floored polytope
  MassVector measure;   // k-mass leaf measure after the latest request
  Rat eps_step;         // per-step tolerance, 1 / (2 * (2k^2 + k))
  Rat cumulative_cost;  // exact running sum of OT movement of `measure`
  long step = 0;        // requests served so far
};

// Per-step tolerance 1 / (2 * (2k^2 + k)): half the reciprocal of the
// downstream discretization granularity.
Rat fractional_eps_step(int k);

// Solver tolerance for one projection: eps_step / (16 * D * log2(max(k,2))^2 * n)
// with D the tree diameter and n the leaf count.
double projection_epsilon(const TauHST& hst, int k);

// Euclidean bound on the divergence gradient over the unit box (skipping the
// root, whose coordinates never enter the objective).
double divergence_lipschitz(const WeightedTree& tree, int k);

// Start from an integral configuration: occupied leaf coordinates nudged to
// delta, unoccupied to 1, repaired into the polytope.  Cost starts at zero;
// the companion measure is the exact point-mass measure of c0.
FractionalState fractional_init(const TauHST& hst, int k,
                                const ServerConfiguration& c0);

// Serve one request: approximate Bregman projection with x_{leaf,1} pinned at
// delta (variable eliminated) and the leaf-coordinate sum held at n - k, exact
// repair, conversion to a (k + 1/2)-mass leaf measure, mass reduction to k,
// and the serving snap.  Returns the new measure (also stored in the state);
// cumulative cost grows by the OT movement of the measure.
MassVector fractional_serve(FractionalState& state, int leaf);

// Mass reduction k + 1/2 -> k: sigma on every subtree aggregate, then a
// top-down push of the shrunk aggregates back to the leaves (children truncated
// to the parent quota, any surplus split equally among them).
MassVector reduce_mass(const MassVector& z);

}  // namespace kserver
