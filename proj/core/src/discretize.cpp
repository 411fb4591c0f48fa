#include "kserver/discretize.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "kserver/error.hpp"

namespace kserver {

namespace {

namespace mp = boost::multiprecision;

// v as an integer count of 1/den units; the caller promises den-barely input.
long long exact_units(const Rat& v, long long den, const std::string& what) {
  const Rat scaled = v * Rat(den);
  if (mp::denominator(scaled) != 1)
    throw Error("TrackerInconsistency", what + " is not a multiple of 1/" +
                                            std::to_string(den));
  return Int(mp::numerator(scaled)).convert_to<long long>();
}

void require_inner(const MassVector& z, const Rat& mass, const std::string& what) {
  if (auto bad = validate(z, MeasureKind::Inner, mass))
    throw Error("InvalidMeasure",
                what + ": " + bad->code + " at node " + std::to_string(bad->node));
}

}  // namespace

HysteresisState hysteresis_init(TreePtr tree, int k, long long m,
                                const ServerConfiguration& start) {
  if (k < 1) throw Error("InvalidMeasure", "k must be positive");
  if (m < 2LL * k * k + k)
    throw Error("GranularityTooSmall",
                "m = " + std::to_string(m) + " below 2k^2 + k");
  if (start.k() != k)
    throw Error("InvalidMeasure", "start configuration has the wrong size");

  MassVector base = MassVector::from_config(tree, start);
  MassVector z3 = step3_scale(base, k, m);
  std::vector<MassUnit> units;
  units.reserve(static_cast<std::size_t>(k) * m);
  for (int leaf : tree->leaves())
    for (int copies = start.count_at(leaf) * static_cast<int>(m); copies > 0;
         --copies)
      units.push_back(MassUnit{leaf, leaf});

  HysteresisState st{std::move(tree),
                     k,
                     m,
                     2 * m + 2 * k + 1,
                     0,
                     base,
                     base,
                     base,
                     std::move(z3),
                     base,
                     base,
                     std::move(units),
                     StageCosts{}};
  return st;
}

MassVector step1_sigma(const MassVector& x) {
  require_inner(x, x.mass(), "flooring input");
  return sigma_map(x);
}

const MassVector& step2_hysteresis(HysteresisState& st, const MassVector& target) {
  const WeightedTree& tree = *st.tree;
  require_inner(target, Rat(st.k), "hysteresis target");

  const int nodes = tree.node_count();
  std::vector<long long> pm(nodes), agg(nodes);
  for (int u = 0; u < nodes; ++u) {
    pm[u] = exact_units(st.z2.point_mass(u), st.m_prime, "hysteresis state");
    agg[u] = exact_units(st.z2.value(u), st.m_prime, "hysteresis state");
  }

  // Integer firing bounds per node: move down into c while agg[c] < floor of
  // the scaled target, up out of c while agg[c] > ceiling of it.
  std::vector<long long> down_below(nodes), up_above(nodes);
  for (int u = 0; u < nodes; ++u) {
    const Rat scaled = target.value(u) * Rat(st.m_prime);
    down_below[u] = floor_rat(scaled).convert_to<long long>();
    up_above[u] = ceil_rat(scaled).convert_to<long long>();
  }

  const long long budget =
      st.m_prime * st.k * static_cast<long long>(nodes - 1);
  long long moves = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int u : tree.top_down_order()) {
      for (int c : tree.children(u)) {
        while (pm[u] >= 1 && agg[c] < down_below[c]) {
          --pm[u];
          ++pm[c];
          ++agg[c];
          changed = true;
          if (++moves > budget)
            throw Error("NonTermination", "hysteresis move budget exhausted");
        }
        while (pm[c] >= 1 && agg[c] > up_above[c]) {
          --pm[c];
          ++pm[u];
          --agg[c];
          changed = true;
          if (++moves > budget)
            throw Error("NonTermination", "hysteresis move budget exhausted");
        }
      }
    }
  }

  std::vector<Rat> out(nodes);
  for (int u = 0; u < nodes; ++u) out[u] = Rat(agg[u], st.m_prime);
  MassVector next = MassVector::from_aggregates(st.tree, out);
  st.costs.z2 += ot_distance(st.z2, next);
  st.z2 = std::move(next);
  return st.z2;
}

MassVector step3_scale(const MassVector& z2, int k, long long m) {
  if (m < 2LL * k * k + k)
    throw Error("GranularityTooSmall",
                "m = " + std::to_string(m) + " below 2k^2 + k");
  require_inner(z2, z2.mass(), "rescale input");
  const Rat lambda = Rat(2 * m + 2 * k + 1, 2 * m);
  std::vector<Rat> out(z2.node_count());
  for (int u = 0; u < z2.node_count(); ++u) out[u] = lambda * z2.value(u);
  return MassVector::from_aggregates(z2.tree(), out);
}

MassVector step4_sigma(const MassVector& z3) { return step1_sigma(z3); }

const MassVector& step5_defer(HysteresisState& st, const MassVector& z4_next) {
  const WeightedTree& tree = *st.tree;
  const int nodes = tree.node_count();
  if (auto bad = validate(z4_next, MeasureKind::Inner, Rat(st.k), Int(st.m)))
    throw Error("InvalidMeasure", "deferral input: " + bad->code + " at node " +
                                      std::to_string(bad->node));

  std::vector<std::vector<int>> at(nodes);
  for (int id = 0; id < static_cast<int>(st.units.size()); ++id)
    at[st.units[id].virtual_node].push_back(id);
  for (int u = 0; u < nodes; ++u) {
    const long long have = static_cast<long long>(at[u].size());
    if (have != exact_units(st.z4.point_mass(u), st.m, "tracked measure"))
      throw Error("TrackerInconsistency",
                  "unit histogram disagrees at node " + std::to_string(u));
  }

  std::vector<long long> delta(nodes, 0);
  for (int u = 1; u < nodes; ++u)
    delta[u] =
        exact_units(z4_next.value(u) - st.z4.value(u), st.m, "aggregate change");

  // Units cross each edge only in its net direction, so the total virtual
  // distance walked equals the transport distance exactly.  Upward moves
  // first, gathering bottom-up; downward moves then fan out top-down,
  // preferring units whose parked leaf already lies in the target subtree.
  const auto& order = tree.top_down_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int u = *it;
    if (u == tree.root() || delta[u] >= 0) continue;
    long long need = -delta[u];
    std::sort(at[u].begin(), at[u].end());
    if (static_cast<long long>(at[u].size()) < need)
      throw Error("TrackerInconsistency",
                  "not enough units to move up from node " + std::to_string(u));
    const int parent = tree.parent(u);
    for (long long i = 0; i < need; ++i) {
      const int id = at[u][static_cast<std::size_t>(i)];
      st.units[id].virtual_node = parent;
      at[parent].push_back(id);
    }
    at[u].erase(at[u].begin(), at[u].begin() + static_cast<std::ptrdiff_t>(need));
  }
  for (int u : order) {
    if (u == tree.root() || delta[u] <= 0) continue;
    long long need = delta[u];
    const int parent = tree.parent(u);
    std::sort(at[parent].begin(), at[parent].end());
    std::stable_partition(at[parent].begin(), at[parent].end(), [&](int id) {
      return tree.is_ancestor_or_self(u, st.units[id].actual_leaf);
    });
    if (static_cast<long long>(at[parent].size()) < need)
      throw Error("TrackerInconsistency",
                  "not enough units to move down into node " + std::to_string(u));
    for (long long i = 0; i < need; ++i) {
      const int id = at[parent][static_cast<std::size_t>(i)];
      st.units[id].virtual_node = u;
      at[u].push_back(id);
    }
    at[parent].erase(at[parent].begin(),
                     at[parent].begin() + static_cast<std::ptrdiff_t>(need));
  }
  for (int u = 0; u < nodes; ++u) {
    const long long have = static_cast<long long>(at[u].size());
    if (have != exact_units(z4_next.point_mass(u), st.m, "moved measure"))
      throw Error("TrackerInconsistency",
                  "moves do not realize the target at node " + std::to_string(u));
  }

  for (MassUnit& unit : st.units) {
    if (!tree.is_leaf(unit.virtual_node) || unit.actual_leaf == unit.virtual_node)
      continue;
    st.costs.deferred +=
        Rat(1, st.m) * tree.leaf_distance(unit.actual_leaf, unit.virtual_node);
    unit.actual_leaf = unit.virtual_node;
  }

  st.costs.z4 += ot_distance(st.z4, z4_next);
  st.z4 = z4_next;
  std::vector<Rat> leaf(tree.leaf_count(), Rat(0));
  for (const MassUnit& unit : st.units)
    leaf[tree.leaf_index(unit.actual_leaf)] += Rat(1, st.m);
  st.deferred = MassVector::from_leaf_masses(st.tree, leaf);
  return st.deferred;
}

const MassVector& pipeline_feed(HysteresisState& st, const MassVector& x) {
  if (x.node_count() != st.tree->node_count())
    throw Error("InvalidMeasure", "fed measure lives on a different tree");
  require_inner(x, Rat(st.k), "fed measure");

  st.costs.source += ot_distance(st.source, x);
  st.source = x;
  MassVector z1 = step1_sigma(x);
  st.costs.z1 += ot_distance(st.z1, z1);
  st.z1 = std::move(z1);
  step2_hysteresis(st, st.z1);
  MassVector z3 = step3_scale(st.z2, st.k, st.m);
  st.costs.z3 += ot_distance(st.z3, z3);
  st.z3 = std::move(z3);
  step5_defer(st, step4_sigma(st.z3));
  ++st.step;
  return st.deferred;
}

SuperfluousFilter::SuperfluousFilter(MassVector initial, Forward forward)
    : current_(std::move(initial)), forward_(std::move(forward)) {
  if (!forward_) throw Error("InvalidMeasure", "missing wrapped algorithm");
}

const MassVector& SuperfluousFilter::request(int leaf) {
  const WeightedTree& tree = *current_.tree();
  if (leaf < 0 || leaf >= tree.node_count() || !tree.is_leaf(leaf))
    throw Error("InvalidTree", "request is not a leaf");
  if (current_.value(leaf) >= 1) {
    last_forwarded_ = false;
    return current_;
  }
  current_ = forward_(leaf);
  last_forwarded_ = true;
  ++forwarded_;
  return current_;
}

std::string stage_line_json(const HysteresisState& st) {
  nlohmann::ordered_json doc;
  doc["step"] = st.step;
  doc["m"] = st.m;
  doc["m_prime"] = st.m_prime;
  const auto measure = [](const MassVector& z) {
    return nlohmann::ordered_json::parse(z.debug_json());
  };
  doc["source"] = measure(st.source);
  doc["z1"] = measure(st.z1);
  doc["z2"] = measure(st.z2);
  doc["z3"] = measure(st.z3);
  doc["z4"] = measure(st.z4);
  doc["deferred"] = measure(st.deferred);
  doc["costs"] = {{"source", rat_to_string(st.costs.source)},
                  {"z1", rat_to_string(st.costs.z1)},
                  {"z2", rat_to_string(st.costs.z2)},
                  {"z3", rat_to_string(st.costs.z3)},
                  {"z4", rat_to_string(st.costs.z4)},
                  {"deferred", rat_to_string(st.costs.deferred)}};
  return doc.dump();
}

}  // namespace kserver
