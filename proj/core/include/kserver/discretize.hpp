#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kserver/measure.hpp"
#include "kserver/rational.hpp"
#include "kserver/tree.hpp"

namespace kserver {

// One unit of mass 1/m tracked through the deferral stage: the node where the
// undeferred trajectory keeps it, and the leaf where the deferred trajectory
// actually parks it.  Actual mass moves only when the unit's virtual walk
// arrives at a leaf, so each jump costs at most the virtual path walked since
// the previous one.
struct MassUnit {
  int virtual_node = -1;
  int actual_leaf = -1;
};

// Cumulative movement cost of each stage of the discretization chain.
// Exact-rational telescopes: z1 <= 2*source, z2 <= z1, z3 <= 2*z2,
// z4 <= 2*z3, deferred <= z4, hence deferred <= 8*source.
struct StageCosts {
  Rat source;    // fed fractional trajectory x
  Rat z1;        // flooring stage sigma(x)
  Rat z2;        // hysteresis stage, (2m+2k+1)-barely
  Rat z3;        // rescaled stage, 2m-barely
  Rat z4;        // flooring stage sigma(z3), m-barely
  Rat deferred;  // leaf-only output y
};

// Online state turning a fractional trajectory of mass k into an m-barely
// fractional leaf trajectory.  Single owner, one request at a time.
struct HysteresisState {
  TreePtr tree;
  int k = 0;
  long long m = 0;        // output granularity, at least 2k^2 + k
  long long m_prime = 0;  // 2m + 2k + 1, hysteresis granularity
  long step = 0;
  MassVector source;    // last fed measure x(t)
  MassVector z1;        // sigma(x)
  MassVector z2;        // hysteresis output, inner measure of mass k
  MassVector z3;        // lambda * z2 with lambda = m'/(2m), mass in [k, k+1/2]
  MassVector z4;        // sigma(z3), inner measure of mass k
  MassVector deferred;  // leaf measure realized by the unit tracker
  std::vector<MassUnit> units;  // k*m units of mass 1/m aggregating to deferred
  StageCosts costs;
};

// State at an integral start configuration: every stage equals the start
// measure and all costs are zero.  Throws GranularityTooSmall when
// m < 2k^2 + k (the rescale stage would overshoot mass k + 1/2).
HysteresisState hysteresis_init(TreePtr tree, int k, long long m,
                                const ServerConfiguration& start);

// Element-wise flooring map sigma on the subtree aggregates.  Superadditive,
// so inner measures stay inner; 2-Lipschitz, so a trajectory's cost at most
// doubles.  Throws InvalidMeasure on a malformed input.
MassVector step1_sigma(const MassVector& x);

// Moves st.z2 toward the target with 1/m' granularity and hysteresis: mass
// 1/m' crosses an edge (u,v) only while the side containing u holds at least
// 1/m' more than the target asks there, taking from a node with at least
// 1/m' of point mass.  Repeated root-first sweeps over both edge directions;
// the result minimizes OT(z2_old, z) + OT(z, target) over (2m+2k+1)-barely
// inner measures, with ties broken toward the largest OT(z2_old, z), and
// satisfies z2_u >= target_u - (2k+1)/m' at every node.  Sub-threshold target
// oscillation therefore leaves z2 untouched.  Throws NonTermination if the
// move budget m'*k*|E| is exhausted.
const MassVector& step2_hysteresis(HysteresisState& st, const MassVector& target);

// Rescales by exactly lambda = m'/(2m), mapping (2m+2k+1)-barely measures of
// mass k to 2m-barely measures of mass lambda*k in [k, k+1/2]; nodes at mass
// >= 1 - (2k+1)/m' reach mass >= 1.  Throws GranularityTooSmall when
// m < 2k^2 + k.
MassVector step3_scale(const MassVector& z2, int k, long long m);

// sigma again: collapses the rescaled mass lambda*k back to exactly k and
// takes 2m-barely measures to m-barely ones, fixing every aggregate >= 1.
MassVector step4_sigma(const MassVector& z3);

// Advances the unit tracker along an optimal transport from st.z4 to z4_next
// and materializes units whose virtual walk reached a leaf.  Updates st.z4,
// st.deferred, and the z4/deferred costs; returns the new leaf measure.
// Throws TrackerInconsistency if the tracker and st.z4 disagree.
const MassVector& step5_defer(HysteresisState& st, const MassVector& z4_next);

// One online step of the whole chain: feeds x(t), runs the five stages, and
// returns the deferred leaf measure y(t).  x must be an inner measure of mass
// k on the same tree.
const MassVector& pipeline_feed(HysteresisState& st, const MassVector& x);

// Request-level adaptor dropping requests the current output already serves
// with a full server; everything else is forwarded to the wrapped algorithm.
// The wrapped run over the forwarded subsequence is exactly the filtered run
// over the full sequence, so costs agree and every forwarded request implies
// movement of at least 1/m.
class SuperfluousFilter {
 public:
  // forward(leaf) advances the wrapped algorithm and returns its new output.
  using Forward = std::function<MassVector(int)>;

  SuperfluousFilter(MassVector initial, Forward forward);

  // Handles one request and returns the current output measure.
  const MassVector& request(int leaf);

  const MassVector& current() const { return current_; }
  bool last_forwarded() const { return last_forwarded_; }
  long long forwarded_count() const { return forwarded_; }

 private:
  MassVector current_;
  Forward forward_;
  bool last_forwarded_ = false;
  long long forwarded_ = 0;
};

// One JSON line with the step index, the stage aggregates, and the cumulative
// stage costs, for trajectory dumps and golden tests.
std::string stage_line_json(const HysteresisState& st);

}  // namespace kserver
