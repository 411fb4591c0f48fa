#include "kserver/antiserver.hpp"

#include <algorithm>
#include <cmath>

#include "kserver/error.hpp"

namespace kserver {

namespace {

// Child coordinate indices of an internal node u: every (v,j) with v a child.
std::vector<int> child_coords(const WeightedTree& tree, const CoordinateLayout& layout,
                              int u) {
  std::vector<int> out;
  for (int v : tree.children(u))
    for (int j = 1; j <= layout.count(v); ++j) out.push_back(layout.index(v, j));
  return out;
}

SeparationCut box_cut(const CoordinateLayout& layout, int idx, bool lower,
                      const Rat& violated_by, const std::string& name) {
  SeparationCut cut;
  cut.coeffs.assign(layout.dimension(), Rat(0));
  // lower bound b <= x  =>  -x <= -b, coefficient -1; upper x <= b, +1.
  cut.coeffs[idx] = lower ? Rat(-1) : Rat(1);
  cut.violated_by = violated_by;
  cut.constraint = name;
  cut.node = layout.node_of(idx);
  return cut;
}

}  // namespace

CoordinateLayout::CoordinateLayout(const WeightedTree& tree) {
  const int n = tree.node_count();
  offset_.assign(n, 0);
  count_.assign(n, 0);
  for (int leaf : tree.leaves()) count_[leaf] = 1;
  const auto& order = tree.top_down_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    for (int c : tree.children(*it)) count_[*it] += count_[c];
  for (int u = 0; u < n; ++u) {
    offset_[u] = dim_;
    dim_ += count_[u];
  }
  node_of_.resize(dim_);
  coord_of_.resize(dim_);
  for (int u = 0; u < n; ++u)
    for (int j = 1; j <= count_[u]; ++j) {
      node_of_[offset_[u] + j - 1] = u;
      coord_of_[offset_[u] + j - 1] = j;
    }
}

std::optional<SeparationCut> separation_oracle(const AntiServerPoint& x,
                                               const Rat& gamma) {
  const WeightedTree& tree = *x.tree;
  const CoordinateLayout layout(tree);
  if (static_cast<int>(x.x.size()) != layout.dimension())
    throw Error("SizeMismatch", "coordinate vector does not match the tree");

  Rat worst = 0;
  std::optional<SeparationCut> cut;

  auto consider_box = [&](int idx, bool lower, const Rat& violation,
                          const std::string& name) {
    if (violation > worst) {
      worst = violation;
      cut = box_cut(layout, idx, lower, violation, name);
    }
  };

  for (int idx = 0; idx < layout.dimension(); ++idx) {
    if (x.x[idx] < 0) consider_box(idx, true, -x.x[idx], "Box");
    if (x.x[idx] > 1) consider_box(idx, false, x.x[idx] - 1, "Box");
  }
  // Root constraint x_{rj} >= 1 for j > k.
  for (int j = x.k + 1; j <= layout.count(tree.root()); ++j) {
    const int idx = layout.index(tree.root(), j);
    if (x.x[idx] < 1) consider_box(idx, true, Rat(1) - x.x[idx], "Root");
  }
  // Sorted-prefix constraints: for each internal u and each s in [n_u],
  // sum of the first s own coordinates <= sum of the s smallest child coords.
  for (int u : tree.top_down_order()) {
    if (!tree.is_internal(u)) continue;
    std::vector<int> kids = child_coords(tree, layout, u);
    std::sort(kids.begin(), kids.end(),
              [&](int a, int b) { return x.x[a] < x.x[b]; });
    Rat lhs = 0, rhs = 0;
    for (int s = 1; s <= layout.count(u); ++s) {
      lhs += x.x[layout.index(u, s)];
      rhs += x.x[kids[s - 1]];
      const Rat violation = lhs - rhs;
      if (violation > worst) {
        worst = violation;
        SeparationCut c;
        c.coeffs.assign(layout.dimension(), Rat(0));
        for (int i = 1; i <= s; ++i) c.coeffs[layout.index(u, i)] = 1;
        for (int i = 0; i < s; ++i) c.coeffs[kids[i]] = -1;
        c.violated_by = violation;
        c.constraint = "Prefix";
        c.node = u;
        cut = std::move(c);
      }
    }
  }

  if (worst <= gamma) return std::nullopt;
  return cut;
}

std::optional<SeparationCut> separation_oracle_exhaustive(const AntiServerPoint& x,
                                                          const Rat& gamma) {
  const WeightedTree& tree = *x.tree;
  const CoordinateLayout layout(tree);

  Rat worst = 0;
  std::optional<SeparationCut> cut;
  for (int idx = 0; idx < layout.dimension(); ++idx) {
    const Rat lo_violation = -x.x[idx];
    const Rat hi_violation = x.x[idx] - 1;
    if (lo_violation > worst) {
      worst = lo_violation;
      cut = box_cut(layout, idx, true, lo_violation, "Box");
    }
    if (hi_violation > worst) {
      worst = hi_violation;
      cut = box_cut(layout, idx, false, hi_violation, "Box");
    }
  }
  for (int j = x.k + 1; j <= layout.count(tree.root()); ++j) {
    const int idx = layout.index(tree.root(), j);
    const Rat violation = Rat(1) - x.x[idx];
    if (violation > worst) {
      worst = violation;
      cut = box_cut(layout, idx, true, violation, "Root");
    }
  }
  for (int u : tree.top_down_order()) {
    if (!tree.is_internal(u)) continue;
    const std::vector<int> kids = child_coords(tree, layout, u);
    const int m = static_cast<int>(kids.size());
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << m); ++mask) {
      Rat rhs = 0;
      int size = 0;
      for (int b = 0; b < m; ++b)
        if (mask & (std::uint64_t{1} << b)) {
          rhs += x.x[kids[b]];
          ++size;
        }
      Rat lhs = 0;
      const int upto = std::min(size, layout.count(u));
      for (int i = 1; i <= upto; ++i) lhs += x.x[layout.index(u, i)];
      const Rat violation = lhs - rhs;
      if (violation > worst) {
        worst = violation;
        SeparationCut c;
        c.coeffs.assign(layout.dimension(), Rat(0));
        for (int i = 1; i <= upto; ++i) c.coeffs[layout.index(u, i)] = 1;
        for (int b = 0; b < m; ++b)
          if (mask & (std::uint64_t{1} << b)) c.coeffs[kids[b]] -= 1;
        c.violated_by = violation;
        c.constraint = "Prefix";
        c.node = u;
        cut = std::move(c);
      }
    }
  }
  if (worst <= gamma) return std::nullopt;
  return cut;
}

std::optional<DenseCut> separation_oracle_dense(const WeightedTree& tree, int k,
                                                const std::vector<double>& x,
                                                double gamma) {
  const CoordinateLayout layout(tree);
  if (static_cast<int>(x.size()) != layout.dimension())
    throw Error("SizeMismatch", "coordinate vector does not match the tree");

  double worst = 0.0;
  std::optional<DenseCut> cut;
  auto consider_box = [&](int idx, bool lower, double violation) {
    if (violation > worst) {
      worst = violation;
      DenseCut c;
      c.coeffs.assign(layout.dimension(), 0.0);
      c.coeffs[idx] = lower ? -1.0 : 1.0;
      c.violated_by = violation;
      cut = std::move(c);
    }
  };

  for (int idx = 0; idx < layout.dimension(); ++idx) {
    if (x[idx] < 0) consider_box(idx, true, -x[idx]);
    if (x[idx] > 1) consider_box(idx, false, x[idx] - 1);
  }
  for (int j = k + 1; j <= layout.count(tree.root()); ++j) {
    const int idx = layout.index(tree.root(), j);
    if (x[idx] < 1) consider_box(idx, true, 1.0 - x[idx]);
  }
  for (int u : tree.top_down_order()) {
    if (!tree.is_internal(u)) continue;
    std::vector<int> kids = child_coords(tree, layout, u);
    std::sort(kids.begin(), kids.end(),
              [&](int a, int b) { return x[a] < x[b]; });
    double lhs = 0.0, rhs = 0.0;
    for (int s = 1; s <= layout.count(u); ++s) {
      lhs += x[layout.index(u, s)];
      rhs += x[kids[s - 1]];
      const double violation = lhs - rhs;
      if (violation > worst) {
        worst = violation;
        DenseCut c;
        c.coeffs.assign(layout.dimension(), 0.0);
        for (int i = 1; i <= s; ++i) c.coeffs[layout.index(u, i)] = 1.0;
        for (int i = 0; i < s; ++i) c.coeffs[kids[i]] -= 1.0;
        c.violated_by = violation;
        cut = std::move(c);
      }
    }
  }

  if (worst <= gamma) return std::nullopt;
  return cut;
}

AntiServerPoint from_config(TreePtr tree, int k, const ServerConfiguration& c) {
  if (c.k() != k)
    throw Error("SizeMismatch",
                std::to_string(c.k()) + " servers for k=" + std::to_string(k));
  const CoordinateLayout layout(*tree);
  AntiServerPoint out{tree, k, std::vector<Rat>(layout.dimension(), Rat(1))};
  for (int u = 0; u < tree->node_count(); ++u) {
    const int held = servers_below(*tree, c, u);
    for (int j = 1; j <= std::min(held, layout.count(u)); ++j)
      out.x[layout.index(u, j)] = 0;
  }
  return out;
}

Rat delta_for(int k) { return Rat(1, 2 * k + 1); }

MassVector to_leaf_measure(const AntiServerPoint& x, const Rat& tolerance) {
  const WeightedTree& tree = *x.tree;
  const CoordinateLayout layout(tree);
  const Rat delta = delta_for(x.k);
  const int n = tree.leaf_count();

  Rat leaf_sum = 0;
  for (int leaf : tree.leaves()) leaf_sum += x.x[layout.index(leaf, 1)];
  const Rat target(n - x.k);
  const Rat gap = leaf_sum - target;
  if ((gap > 0 ? gap : -gap) > tolerance)
    throw Error("MassCondition", "sum of leaf coordinates " + rat_to_string(leaf_sum) +
                                     " vs " + rat_to_string(target));

  std::vector<Rat> masses(n);
  Rat total = 0;
  for (int i = 0; i < n; ++i) {
    masses[i] = (Rat(1) - x.x[layout.index(tree.leaves()[i], 1)]) / (Rat(1) - delta);
    total += masses[i];
  }
  const Rat want = Rat(x.k) + Rat(1, 2);
  if (total != want) {
    if (total <= 0) throw Error("MassCondition", "no leaf mass to renormalize");
    const Rat scale = want / total;
    for (Rat& v : masses) v *= scale;
  }
  return MassVector::from_leaf_masses(x.tree, masses);
}

double divergence(const AntiServerPoint& x, const AntiServerPoint& x_prime) {
  const WeightedTree& tree = *x.tree;
  const CoordinateLayout layout(tree);
  const double delta = rat_to_double(delta_for(x.k));
  long double total = 0;
  for (int u = 1; u < tree.node_count(); ++u) {
    const long double w = rat_to_double(tree.weight(u));
    for (int j = 1; j <= layout.count(u); ++j) {
      const int idx = layout.index(u, j);
      const long double a = rat_to_double(x.x[idx]) + delta;
      const long double b = rat_to_double(x_prime.x[idx]) + delta;
      total += w * (a * std::log(a / b) - a + b);
    }
  }
  return static_cast<double>(total);
}

std::vector<double> divergence_gradient(const AntiServerPoint& x,
                                        const AntiServerPoint& x_prime) {
  const WeightedTree& tree = *x.tree;
  const CoordinateLayout layout(tree);
  const double delta = rat_to_double(delta_for(x.k));
  std::vector<double> grad(layout.dimension(), 0.0);
  for (int u = 1; u < tree.node_count(); ++u) {
    const double w = rat_to_double(tree.weight(u));
    for (int j = 1; j <= layout.count(u); ++j) {
      const int idx = layout.index(u, j);
      const double a = rat_to_double(x.x[idx]) + delta;
      const double b = rat_to_double(x_prime.x[idx]) + delta;
      grad[idx] = w * std::log(a / b);
    }
  }
  return grad;
}

Rat positive_movement(const AntiServerPoint& x, const AntiServerPoint& x_prime) {
  if (x.x.size() != x_prime.x.size())
    throw Error("SizeMismatch", "coordinate sets differ");
  const WeightedTree& tree = *x.tree;
  const CoordinateLayout layout(tree);
  Rat total = 0;
  for (int u = 1; u < tree.node_count(); ++u)
    for (int j = 1; j <= layout.count(u); ++j) {
      const int idx = layout.index(u, j);
      const Rat d = x.x[idx] - x_prime.x[idx];
      if (d > 0) total += tree.weight(u) * d;
    }
  return total;
}

namespace {

// Sum of the s smallest entries of {max(x_i, min(theta, cap_i))}: the value
// of the s-prefix after raising the water level to theta.
Rat prefix_at_level(const std::vector<Rat>& x, const std::vector<Rat>& cap,
                    const Rat& theta, int s) {
  std::vector<Rat> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    v[i] = std::max(x[i], std::min(theta, cap[i]));
  std::sort(v.begin(), v.end());
  Rat total = 0;
  for (int i = 0; i < s; ++i) total += v[i];
  return total;
}

// Smallest water level theta with prefix_at_level(...) >= target, or nullopt
// when even raising everything to its ceiling falls short.  Exact: the
// prefix value is piecewise linear in theta with breakpoints at the given
// values and ceilings.
std::optional<Rat> solve_water_level(const std::vector<Rat>& x,
                                     const std::vector<Rat>& cap, const Rat& target,
                                     int s) {
  Rat top = 0;
  for (const Rat& c : cap) top = std::max(top, c);
  if (prefix_at_level(x, cap, top, s) < target) return std::nullopt;

  std::vector<Rat> breakpoints = x;
  breakpoints.insert(breakpoints.end(), cap.begin(), cap.end());
  breakpoints.push_back(top);
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()),
                    breakpoints.end());

  Rat lo = breakpoints.front();
  for (const Rat& hi : breakpoints) {
    if (prefix_at_level(x, cap, hi, s) < target) {
      lo = hi;
      continue;
    }
    // The level lies in (lo, hi]: within this segment each coordinate is
    // either pinned (at x_i or cap_i) or rides the water level, so the
    // prefix is const + count*theta.
    const Rat at_lo = prefix_at_level(x, cap, lo, s);
    const Rat at_hi = prefix_at_level(x, cap, hi, s);
    if (at_hi == at_lo) return hi;  // flat segment; hi reaches target
    // Linear interpolation is exact on a linear segment.
    return lo + (target - at_lo) * (hi - lo) / (at_hi - at_lo);
  }
  return top;
}

}  // namespace

AntiServerPoint repair_into_polytope(const AntiServerPoint& y, const Rat& eta,
                                     int pinned_leaf) {
  (void)eta;  // kept for contract symmetry; the procedure is total either way
  const WeightedTree& tree = *y.tree;
  const CoordinateLayout layout(tree);
  const Rat delta = delta_for(y.k);

  // Static per-coordinate ceilings: a pinned request coordinate is frozen at
  // delta, which caps the smallest prefix of every ancestor.  cap_{u,s} is
  // the s-th smallest child ceiling (1 everywhere away from the pin).
  std::vector<Rat> cap(layout.dimension(), Rat(1));
  if (pinned_leaf >= 0) {
    cap[layout.index(pinned_leaf, 1)] = delta;
    const auto& order = tree.top_down_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const int u = *it;
      if (!tree.is_internal(u)) continue;
      std::vector<Rat> kid_caps;
      for (int idx : child_coords(tree, layout, u)) kid_caps.push_back(cap[idx]);
      std::sort(kid_caps.begin(), kid_caps.end());
      for (int j = 1; j <= layout.count(u); ++j)
        cap[layout.index(u, j)] = kid_caps[j - 1];
    }
  }

  AntiServerPoint out = y;
  // Clamp pass: box bounds, root floors, leaf delta floors, pin, ceilings.
  for (int u = 0; u < tree.node_count(); ++u) {
    for (int j = 1; j <= layout.count(u); ++j) {
      const int idx = layout.index(u, j);
      Rat lo(0), hi(1);
      if (u == tree.root() && j > y.k) lo = 1;
      if (tree.is_leaf(u)) lo = delta;
      hi = std::min(hi, cap[idx]);
      lo = std::min(lo, hi);  // a pinned ancestor cap may undercut the floor
      if (out.x[idx] < lo) out.x[idx] = lo;
      if (out.x[idx] > hi) out.x[idx] = hi;
    }
  }
  if (pinned_leaf >= 0) out.x[layout.index(pinned_leaf, 1)] = delta;

  // Root-down lifting: restore each node's sorted-prefix constraints by
  // raising child coordinates to a common water level (respecting ceilings).
  // The clamp pass guarantees sum_{i<=s} x_{u,i} <= sum of the s smallest
  // child ceilings, so a feasible level always exists.  Raising a value
  // never shrinks any prefix sum, so earlier constraints stay satisfied.
  for (int u : tree.top_down_order()) {
    if (!tree.is_internal(u)) continue;
    const std::vector<int> kids = child_coords(tree, layout, u);
    std::vector<Rat> kid_caps;
    for (int idx : kids) kid_caps.push_back(cap[idx]);
    for (int s = 1; s <= layout.count(u); ++s) {
      Rat lhs = 0;
      for (int i = 1; i <= s; ++i) lhs += out.x[layout.index(u, i)];
      std::vector<Rat> vals;
      for (int idx : kids) vals.push_back(out.x[idx]);
      if (prefix_at_level(vals, kid_caps, Rat(0), s) >= lhs) continue;
      const auto theta = solve_water_level(vals, kid_caps, lhs, s);
      if (!theta)
        throw Error("NotNear", "prefix constraint unrepairable at node " +
                                   std::to_string(u));
      for (int idx : kids)
        out.x[idx] = std::max(out.x[idx], std::min(*theta, cap[idx]));
    }
  }

  if (separation_oracle(out, Rat(0)))
    throw Error("NotNear", "separation oracle rejects repaired point");
  return out;
}

}  // namespace kserver
