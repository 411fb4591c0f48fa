#pragma once

// Exact offline optima and brute-force oracles for k-server instances.

#include <string>
#include <vector>

#include "kserver/measure.hpp"
#include "kserver/metric_space.hpp"
#include "kserver/rational.hpp"
#include "kserver/tree.hpp"

namespace kserver {

// A k-server instance: a point set with exact pairwise distances, the
// initial server positions, and the request sequence.
struct RequestTrace {
  int n = 0;                  // number of points
  std::vector<Rat> dist;      // n*n row-major, symmetric, zero diagonal
  std::vector<int> initial;   // starting positions, size k
  std::vector<int> requests;  // rho(1), ..., rho(T)

  int k() const { return static_cast<int>(initial.size()); }
  int horizon() const { return static_cast<int>(requests.size()); }
  const Rat& d(int a, int b) const { return dist[a * n + b]; }
};

// Trace over an integer metric space.
RequestTrace make_trace(const MetricSpace& space, std::vector<int> initial,
                        std::vector<int> requests);

// Trace over a tree's leaf metric. Positions and requests are leaf ids
// and are stored as indexes into tree.leaves().
RequestTrace make_trace(const TreePtr& tree, const ServerConfiguration& start,
                        const std::vector<int>& leaf_requests);

// {"n":..,"dist":["..",..],"initial":[..],"requests":[..]}.
std::string trace_json(const RequestTrace& trace);
RequestTrace trace_from_json(const std::string& text);

// Exact offline optimum via min-cost flow on the time-expanded service
// graph: k source units, one mandatory coverage edge per request, and
// movement arcs weighted by (exactly integer-scaled) distances.
// Distances must satisfy the triangle inequality.
Rat opt_flow(const RequestTrace& trace);

// Exact offline optimum by dynamic programming over k-point multisets
// with min-matching transition costs. A verification oracle: throws
// InstanceTooLarge instead of running unbounded.
Rat opt_dp(const RequestTrace& trace);

// Minimum-cost transport between equal-mass measures on one tree by
// exhaustive assignment of 1/m mass units (at most 8 units per side).
// Independent oracle for ot_distance; works for inner measures too.
Rat brute_transport(const MassVector& a, const MassVector& b, long long m);

}  // namespace kserver
