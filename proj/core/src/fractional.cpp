#include "kserver/fractional.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "kserver/error.hpp"
#include "kserver/solver.hpp"

namespace kserver {

namespace {

// Leaf measure with the requested leaf raised to exactly 1, the deficit drawn
// from the heaviest other leaves (ties to the smaller id).
MassVector snap_serving(const MassVector& z, int leaf, const Rat& eps) {
  const WeightedTree& tree = *z.tree();
  std::vector<Rat> y = z.leaf_masses();
  const int req = tree.leaf_index(leaf);
  if (y[req] >= 1) return z;
  if (y[req] < Rat(1) - eps)
    throw Error("SolverFailure", "requested leaf mass below the snap window");
  Rat deficit = Rat(1) - y[req];
  while (deficit > 0) {
    int best = -1;
    for (int i = 0; i < static_cast<int>(y.size()); ++i) {
      if (i == req || y[i] <= 0) continue;
      if (best < 0 || y[i] > y[best]) best = i;
    }
    if (best < 0) throw Error("SolverFailure", "no mass available for the snap");
    const Rat take = std::min(deficit, y[best]);
    y[best] -= take;
    deficit -= take;
  }
  y[req] = 1;
  return MassVector::from_leaf_masses(z.tree(), y);
}

}  // namespace

Rat fractional_eps_step(int k) {
  if (k < 1) throw Error("InvalidTree", "k must be positive");
  return Rat(1, 2 * (2 * k * k + k));
}

double projection_epsilon(const TauHST& hst, int k) {
  const double diam = rat_to_double(hst.tree->diameter());
  const double lg = std::log2(static_cast<double>(std::max(k, 2)));
  const double n = hst.tree->leaf_count();
  return rat_to_double(fractional_eps_step(k)) / (16.0 * diam * lg * lg * n);
}

double divergence_lipschitz(const WeightedTree& tree, int k) {
  const CoordinateLayout layout(tree);
  const double delta = rat_to_double(delta_for(k));
  const double slope = std::log((1.0 + delta) / delta);
  double sq = 0.0;
  for (int u = 1; u < tree.node_count(); ++u) {
    const double w = rat_to_double(tree.weight(u));
    sq += layout.count(u) * w * w * slope * slope;
  }
  return std::sqrt(sq);
}

FractionalState fractional_init(const TauHST& hst, int k,
                                const ServerConfiguration& c0) {
  if (hst.tau < 10) throw Error("InvalidTree", "tau below 10");
  if (k < 1) throw Error("InvalidTree", "k must be positive");
  const TreePtr tree = hst.tree;
  const CoordinateLayout layout(*tree);
  const Rat delta = delta_for(k);

  AntiServerPoint x0 = from_config(tree, k, c0);
  for (int leaf : tree->leaves())
    x0.x[layout.index(leaf, 1)] = c0.count_at(leaf) > 0 ? delta : Rat(1);
  x0 = repair_into_polytope(x0, Rat(0));

  return FractionalState{hst,
                         k,
                         std::move(x0),
                         MassVector::from_config(tree, c0),
                         fractional_eps_step(k),
                         Rat(0),
                         0};
}

MassVector fractional_serve(FractionalState& st, int leaf) {
  const TreePtr tree = st.hst.tree;
  if (leaf < 0 || leaf >= tree->node_count() || !tree->is_leaf(leaf))
    throw Error("InvalidTree", "request is not a leaf");
  const int n = tree->leaf_count();
  if (st.k >= n)
    throw Error("SolverFailure", "the pinned projection needs k < n");

  const CoordinateLayout layout(*tree);
  const Rat delta = delta_for(st.k);
  const double ddelta = rat_to_double(delta);
  const int pin = layout.index(leaf, 1);
  const int root = tree->root();

  // Free coordinates: everything but the root block (fixed at its floor, never
  // part of the objective), the pinned request coordinate, and one further
  // leaf coordinate that the mass condition sum_l x_{l1} = n - k determines
  // from the rest.  Substituting that coordinate away keeps the search region
  // full-dimensional; posing the equality as a cut pair instead lets the
  // ellipsoid stretch without bound along the slab on symmetric instances.
  int elim_leaf = -1;
  for (int l : tree->leaves())
    if (l != leaf) elim_leaf = l;
  const int elim = layout.index(elim_leaf, 1);

  std::vector<int> free_of;
  for (int idx = 0; idx < layout.dimension(); ++idx)
    if (layout.node_of(idx) != root && idx != pin && idx != elim)
      free_of.push_back(idx);
  const int d = static_cast<int>(free_of.size());

  std::vector<char> slot_is_leaf(d, 0);
  std::vector<int> leaf_slots;
  for (int s = 0; s < d; ++s)
    if (tree->is_leaf(layout.node_of(free_of[s]))) {
      slot_is_leaf[s] = 1;
      leaf_slots.push_back(s);
    }

  const double elim_base = static_cast<double>(n - st.k) - ddelta;
  auto eliminated = [&](const Eigen::VectorXd& v) {
    double rest = 0.0;
    for (int s : leaf_slots) rest += v[s];
    return elim_base - rest;
  };

  std::vector<double> fixed(layout.dimension(), 0.0);
  for (int j = 1; j <= layout.count(root); ++j)
    fixed[layout.index(root, j)] = j <= st.k ? 0.0 : 1.0;
  fixed[pin] = ddelta;

  auto assemble = [&](const Eigen::VectorXd& v) {
    std::vector<double> full = fixed;
    for (int s = 0; s < d; ++s) full[free_of[s]] = v[s];
    full[elim] = eliminated(v);
    return full;
  };

  std::vector<double> prev(layout.dimension());
  for (int idx = 0; idx < layout.dimension(); ++idx)
    prev[idx] = rat_to_double(st.x.x[idx]);

  std::vector<double> wcoef(d);
  for (int s = 0; s < d; ++s)
    wcoef[s] = rat_to_double(tree->weight(layout.node_of(free_of[s])));
  const double welim = rat_to_double(tree->weight(elim_leaf));
  const double prev_elim = prev[elim];

  // One divergence term per coordinate; the floor guards against evaluation
  // off the box, and cuts keep the solver within gamma of it, far inside the
  // guard.
  auto term = [&](double coord, double prev_coord, double w) {
    const long double a = std::max(coord, -0.5 * ddelta) + ddelta;
    const long double b = prev_coord + ddelta;
    return w * (a * std::log(a / b) - a + b);
  };

  OracleConvexFunction f;
  f.value = [&](const Eigen::VectorXd& v, double) {
    long double total = 0;
    for (int s = 0; s < d; ++s) total += term(v[s], prev[free_of[s]], wcoef[s]);
    total += term(eliminated(v), prev_elim, welim);
    return static_cast<double>(total);
  };
  f.gradient = [&](const Eigen::VectorXd& v, double) {
    Eigen::VectorXd g(d);
    for (int s = 0; s < d; ++s) {
      const double a = std::max(v[s], -0.5 * ddelta) + ddelta;
      g[s] = wcoef[s] * std::log(a / (prev[free_of[s]] + ddelta));
    }
    const double ve = std::max(eliminated(v), -0.5 * ddelta) + ddelta;
    const double chain = welim * std::log(ve / (prev_elim + ddelta));
    for (int s : leaf_slots) g[s] -= chain;
    return g;
  };
  const double slope = std::log((1.0 + ddelta) / ddelta);
  double sq = 0.0, hi = welim * ((1.0 + ddelta) * slope + 1.0);
  double alpha = std::numeric_limits<double>::infinity();
  for (int s = 0; s < d; ++s) {
    const double bound = (wcoef[s] + (slot_is_leaf[s] ? welim : 0.0)) * slope;
    sq += bound * bound;
    hi += wcoef[s] * ((1.0 + ddelta) * slope + 1.0);
    alpha = std::min(alpha, wcoef[s] / (1.0 + ddelta));
  }
  f.lipschitz = std::sqrt(sq);
  f.strong_convexity = alpha;
  f.value_lo = 0.0;
  f.value_hi = hi + 1.0;

  OracleConvexSet K;
  K.dimension = d;
  K.center = Eigen::VectorXd::Constant(d, 0.5);
  K.radius = 0.5 * std::sqrt(static_cast<double>(d)) + 1.0;
  K.oracle = [&](const Eigen::VectorXd& v,
                 double gamma) -> std::optional<Eigen::VectorXd> {
    // The eliminated coordinate's floor and ceiling, delta <= v_e <= 1, as
    // cuts on the leaf coordinates that determine it.
    const double ve = eliminated(v);
    if (ve < ddelta - gamma || ve > 1.0 + gamma) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(d);
      const double sign = ve < ddelta - gamma ? 1.0 : -1.0;
      for (int s : leaf_slots) a[s] = sign;
      return a;
    }
    // Delta floors on the free leaf coordinates.
    int worst_slot = -1;
    double worst = gamma;
    for (int s : leaf_slots)
      if (ddelta - v[s] > worst) {
        worst = ddelta - v[s];
        worst_slot = s;
      }
    if (worst_slot >= 0) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(d);
      a[worst_slot] = -1.0;
      return a;
    }
    // Box, root floors, sorted prefixes.  A unit change of a leaf slot moves
    // the eliminated coordinate by minus one, hence the chain-rule projection.
    if (auto c = separation_oracle_dense(*tree, st.k, assemble(v), gamma)) {
      const double ce = c->coeffs[elim];
      Eigen::VectorXd a = Eigen::VectorXd::Zero(d);
      double norm = 0.0;
      for (int s = 0; s < d; ++s) {
        a[s] = c->coeffs[free_of[s]] - (slot_is_leaf[s] ? ce : 0.0);
        norm = std::max(norm, std::abs(a[s]));
      }
      if (norm == 0.0)
        throw Error("SolverFailure", "cut lies entirely on fixed coordinates");
      a /= norm;
      return a;
    }
    return std::nullopt;
  };

  // The solver bounds the distance to the minimizer in the reduced space; the
  // assembled point adds the eliminated coordinate's displacement, so tighten
  // by the worst-case stretch of the substitution to keep the guarantee in
  // the full space.
  Eigen::VectorXd v(0);
  if (d > 0) {
    const double eps = projection_epsilon(st.hst, st.k) /
                       (2.0 * std::sqrt(static_cast<double>(n)));
    try {
      v = minimize_convex(f, K, eps);
    } catch (const Error& e) {
      throw Error("SolverFailure", e.what());
    }
  }

  const std::vector<double> sol = assemble(v);
  AntiServerPoint cand{tree, st.k, std::vector<Rat>(layout.dimension())};
  for (int idx = 0; idx < layout.dimension(); ++idx)
    cand.x[idx] = rat_from_double(sol[idx]);
  cand.x[pin] = delta;
  AntiServerPoint next = repair_into_polytope(cand, Rat(0), leaf);

  Rat leaf_sum = 0;
  for (int l : tree->leaves()) leaf_sum += next.x[layout.index(l, 1)];
  Rat gap = leaf_sum - Rat(n - st.k);
  if (gap < 0) gap = -gap;
  if (gap > st.eps_step)
    throw Error("SolverFailure", "mass condition drift " + rat_to_string(gap));

  const MassVector half = to_leaf_measure(next, st.eps_step);
  const MassVector snapped = snap_serving(reduce_mass(half), leaf, st.eps_step);
  if (snapped.value(leaf) < 1)
    throw Error("SolverFailure", "serving predicate failed after the snap");

  st.cumulative_cost += ot_distance(st.measure, snapped);
  st.x = std::move(next);
  st.measure = snapped;
  ++st.step;
  return st.measure;
}

MassVector reduce_mass(const MassVector& z) {
  if (z.mass() < Rat(1, 2) || frac_rat(z.mass()) != Rat(1, 2))
    throw Error("InvalidMeasure", "mass is not an integer plus one half");
  if (auto bad = validate(z, MeasureKind::Leaf, z.mass()))
    throw Error("InvalidMeasure",
                bad->code + " at node " + std::to_string(bad->node));
  const TreePtr tree = z.tree();
  const MassVector shrunk = sigma_map(z);

  // Push the shrunk aggregates back down: children truncated to the remaining
  // quota in id order, then the surplus (nonnegative, by superadditivity of
  // sigma) split equally among them.
  std::vector<Rat> quota(tree->node_count(), Rat(0));
  quota[tree->root()] = shrunk.mass();
  for (int u : tree->top_down_order()) {
    if (!tree->is_internal(u)) continue;
    const auto& kids = tree->children(u);
    Rat remaining = quota[u];
    std::vector<Rat> given(kids.size());
    for (std::size_t i = 0; i < kids.size(); ++i) {
      given[i] = std::min(shrunk.value(kids[i]), remaining);
      remaining -= given[i];
    }
    const Rat share = remaining / static_cast<int>(kids.size());
    for (std::size_t i = 0; i < kids.size(); ++i)
      quota[kids[i]] = given[i] + share;
  }
  std::vector<Rat> leaf(tree->leaf_count());
  for (int i = 0; i < tree->leaf_count(); ++i)
    leaf[i] = quota[tree->leaves()[i]];
  return MassVector::from_leaf_masses(tree, leaf);
}

}  // namespace kserver
