#include "kserver/rounding.hpp"

#include <algorithm>
#include <utility>

#include <nlohmann/json.hpp>

#include "kserver/error.hpp"

namespace kserver {

namespace mp = boost::multiprecision;

namespace {

void insert_sorted(std::vector<int>& v, int x) {
  v.insert(std::lower_bound(v.begin(), v.end(), x), x);
}

void erase_one(std::vector<int>& v, int x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x)
    throw Error("NoCandidate", "server to remove is not in the member");
  v.erase(it);
}

// Smallest-id leaf of the member inside the subtree of root, or -1.
int first_leaf_below(const WeightedTree& tree, const ServerConfiguration& c,
                     int root) {
  for (int leaf : c.leaves)
    if (tree.is_ancestor_or_self(root, leaf)) return leaf;
  return -1;
}

MassVector shift_unit(const MassVector& z, int from, int to, long long m) {
  auto masses = z.leaf_masses();
  const auto& tree = *z.tree();
  const Rat unit(1, m);
  masses[tree.leaf_index(from)] -= unit;
  masses[tree.leaf_index(to)] += unit;
  if (masses[tree.leaf_index(from)] < 0)
    throw Error("MassMismatch", "no unit of mass to move at the source leaf");
  return MassVector::from_leaf_masses(z.tree(), masses);
}

void require_clean(const Ensemble& e, const char* when) {
  if (auto v = ensemble_check(e))
    throw Error(v->code, std::string(when) + " at node " +
                             std::to_string(v->node) + ", member " +
                             std::to_string(v->member));
}

}  // namespace

Ensemble ensemble_init(TreePtr tree, long long m,
                       const ServerConfiguration& start) {
  if (m < 1) throw Error("GranularityTooSmall", "need at least one member");
  if (start.k() < 1) throw Error("SizeMismatch", "empty start configuration");
  for (int leaf : start.leaves)
    if (leaf < 0 || leaf >= tree->node_count() || !tree->is_leaf(leaf))
      throw Error("NotALeaf", "start configuration node " +
                                  std::to_string(leaf));
  Ensemble e{tree, m, std::vector<ServerConfiguration>(m, start),
             MassVector::from_config(tree, start),
             std::vector<Rat>(m, Rat(0))};
  return e;
}

std::optional<EnsembleViolation> ensemble_check(const Ensemble& e) {
  const auto& tree = *e.tree;
  for (int u = 0; u < tree.node_count(); ++u) {
    const Rat zu = e.z.value(u);
    const Int lo = floor_rat(zu);
    const Int hi = ceil_rat(zu);
    long long total = 0;
    for (int i = 0; i < static_cast<int>(e.members.size()); ++i) {
      const int nv = servers_below(tree, e.members[i], u);
      total += nv;
      if (Int(nv) < lo || Int(nv) > hi)
        return EnsembleViolation{"BalanceViolation", u, i};
    }
    if (Rat(total, e.m) != zu)
      return EnsembleViolation{"ConsistencyViolation", u, -1};
  }
  return std::nullopt;
}

Rat balance_gap(const Ensemble& e) {
  const auto& tree = *e.tree;
  Rat total(0);
  for (int v = 1; v < tree.node_count(); ++v) {
    const Rat zv = e.z.value(v);
    const Rat lo(floor_rat(zv));
    const Rat hi(ceil_rat(zv));
    Rat acc(0);
    for (const auto& c : e.members) {
      const Rat nv(servers_below(tree, c, v));
      const Rat d_lo = nv >= lo ? nv - lo : lo - nv;
      const Rat d_hi = nv >= hi ? nv - hi : hi - nv;
      acc += d_lo < d_hi ? d_lo : d_hi;
    }
    total += tree.weight(v) * acc;
  }
  return total / Rat(e.m);
}

std::vector<std::pair<int, int>> elementary_moves(const MassVector& a,
                                                  const MassVector& b,
                                                  long long m) {
  if (!WeightedTree::same_structure(*a.tree(), *b.tree()))
    throw Error("TreeMismatch", "measures live on different trees");
  if (a.mass() != b.mass())
    throw Error("MassMismatch", rat_to_string(a.mass()) + " vs " +
                                    rat_to_string(b.mass()));
  for (const auto* z : {&a, &b})
    if (auto v = validate(*z, MeasureKind::Leaf, z->mass(), Int(m)))
      throw Error(v->code, "elementary move endpoint measure: " + v->detail);

  const auto& tree = *a.tree();
  const int n = tree.node_count();
  std::vector<std::vector<int>> sources(n), sinks(n);
  for (int leaf : tree.leaves()) {
    const Rat d = (b.value(leaf) - a.value(leaf)) * Rat(m);
    const long long units = Int(mp::numerator(d)).convert_to<long long>();
    if (units < 0) sources[leaf].assign(-units, leaf);
    if (units > 0) sinks[leaf].assign(units, leaf);
  }

  // Bottom-up: each subtree settles its internal surplus/deficit first, so
  // whatever bubbles up crosses every edge in its net direction only.
  std::vector<std::pair<int, int>> moves;
  const auto& order = tree.top_down_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int u = *it;
    if (tree.is_leaf(u)) continue;
    auto& src = sources[u];
    auto& snk = sinks[u];
    for (int c : tree.children(u)) {
      src.insert(src.end(), sources[c].begin(), sources[c].end());
      snk.insert(snk.end(), sinks[c].begin(), sinks[c].end());
      sources[c].clear();
      sinks[c].clear();
    }
    std::sort(src.begin(), src.end());
    std::sort(snk.begin(), snk.end());
    std::size_t matched = std::min(src.size(), snk.size());
    for (std::size_t i = 0; i < matched; ++i)
      moves.emplace_back(src[i], snk[i]);
    src.erase(src.begin(), src.begin() + static_cast<long>(matched));
    snk.erase(snk.begin(), snk.begin() + static_cast<long>(matched));
  }
  if (!sources[0].empty() || !sinks[0].empty())
    throw Error("MassMismatch", "transport units left unmatched at the root");
  return moves;
}

Rat rebalance(Ensemble& e, int from) {
  const auto& tree = *e.tree;
  Rat moved(0);
  for (int v : tree.top_down_order()) {
    if (v == from || !tree.is_ancestor_or_self(from, v)) continue;
    const int p = tree.parent(v);
    while (true) {
      int hi = 0, lo = 0;
      int hi_n = servers_below(tree, e.members[0], v);
      int lo_n = hi_n;
      for (int i = 1; i < static_cast<int>(e.members.size()); ++i) {
        const int nv = servers_below(tree, e.members[i], v);
        if (nv > hi_n) {
          hi_n = nv;
          hi = i;
        }
        if (nv < lo_n) {
          lo_n = nv;
          lo = i;
        }
      }
      // With consistency, spread <= 1 is exactly balancedness at v.
      if (hi_n - lo_n <= 1) break;

      // Exchange against the sibling where the low member most out-counts
      // the high member; one exists whenever the parent is balanced, and
      // swapping there never unbalances an already-balanced sibling.
      int best_sib = -1;
      int best_diff = 0;
      for (int c : tree.children(p)) {
        if (c == v) continue;
        const int diff = servers_below(tree, e.members[lo], c) -
                         servers_below(tree, e.members[hi], c);
        if (best_sib < 0 || diff > best_diff) {
          best_sib = c;
          best_diff = diff;
        }
      }
      if (best_sib < 0 || best_diff < 1)
        throw Error("ExchangeUnavailable",
                    "no sibling exchange at node " + std::to_string(v));
      const int a = first_leaf_below(tree, e.members[hi], v);
      const int b = first_leaf_below(tree, e.members[lo], best_sib);
      if (a < 0 || b < 0)
        throw Error("ExchangeUnavailable",
                    "exchange endpoints missing at node " + std::to_string(v));
      erase_one(e.members[hi].leaves, a);
      insert_sorted(e.members[hi].leaves, b);
      erase_one(e.members[lo].leaves, b);
      insert_sorted(e.members[lo].leaves, a);
      const Rat d = tree.leaf_distance(a, b);
      e.member_cost[hi] += d;
      e.member_cost[lo] += d;
      moved += Rat(2) * d;
    }
  }
  return moved;
}

Rat apply_elementary(Ensemble& e, int from, int to) {
  const auto& tree = *e.tree;
  for (int leaf : {from, to})
    if (leaf < 0 || leaf >= tree.node_count() || !tree.is_leaf(leaf))
      throw Error("NotALeaf", "move endpoint " + std::to_string(leaf));
  if (from == to) return Rat(0);

  const Rat z_from = e.z.value(from);
  const Rat z_to = e.z.value(to);
  if (z_from < Rat(1, e.m))
    throw Error("MassMismatch", "no unit of mass at the source leaf");

  // A donor holds the high count at the source leaf (every member, when the
  // mass there is integral); a receiver holds the low count at the target.
  const Int give_n = ceil_rat(z_from);
  const Int take_n = floor_rat(z_to);
  int donor = -1, receiver = -1, direct = -1;
  for (int i = 0; i < static_cast<int>(e.members.size()); ++i) {
    const bool can_give = Int(e.members[i].count_at(from)) == give_n;
    const bool can_take = Int(e.members[i].count_at(to)) == take_n;
    if (can_give && can_take && direct < 0) direct = i;
    if (can_give && donor < 0) donor = i;
    if (can_take && receiver < 0) receiver = i;
  }

  Rat moved(0);
  const int u = tree.lca(from, to);
  if (direct >= 0) {
    erase_one(e.members[direct].leaves, from);
    insert_sorted(e.members[direct].leaves, to);
    const Rat d = tree.leaf_distance(from, to);
    e.member_cost[direct] += d;
    moved += d;
  } else {
    if (donor < 0 || receiver < 0)
      throw Error("NoCandidate", "no donor/receiver member for the move");
    // The donor holds high counts at both leaves, the receiver low counts at
    // both; balancedness at their lowest common ancestor guarantees a leaf
    // under it where the receiver out-counts the donor.
    int pivot = -1;
    for (int leaf : tree.leaves()) {
      if (!tree.is_ancestor_or_self(u, leaf)) continue;
      if (e.members[receiver].count_at(leaf) > e.members[donor].count_at(leaf)) {
        pivot = leaf;
        break;
      }
    }
    if (pivot < 0)
      throw Error("NoCandidate", "no pivot leaf under the common ancestor");
    erase_one(e.members[donor].leaves, from);
    insert_sorted(e.members[donor].leaves, pivot);
    erase_one(e.members[receiver].leaves, pivot);
    insert_sorted(e.members[receiver].leaves, to);
    const Rat d = tree.leaf_distance(from, pivot) +
                  tree.leaf_distance(pivot, to);
    e.member_cost[donor] += tree.leaf_distance(from, pivot);
    e.member_cost[receiver] += tree.leaf_distance(pivot, to);
    moved += d;
  }

  e.z = shift_unit(e.z, from, to, e.m);
  moved += rebalance(e, u);
  require_clean(e, "after elementary move");
  return moved;
}

Rat advance(Ensemble& e, const MassVector& z_next) {
  if (!WeightedTree::same_structure(*z_next.tree(), *e.z.tree()))
    throw Error("TreeMismatch", "next measure lives on a different tree");
  const int k = e.members.empty() ? 0 : e.members.front().k();
  if (auto v = validate(z_next, MeasureKind::Leaf, Rat(k), Int(e.m)))
    throw Error(v->code, "ensemble target measure: " + v->detail);
  Rat moved(0);
  for (const auto& [src, dst] : elementary_moves(e.z, z_next, e.m))
    moved += apply_elementary(e, src, dst);
  if (!(e.z == z_next))
    throw Error("ConsistencyViolation",
                "companion measure drifted from the decomposition target");
  return moved / Rat(e.m);
}

Ensemble round_line(const MassVector& z, long long m) {
  const auto& tree = *z.tree();
  if (m < 1) throw Error("GranularityTooSmall", "need at least one member");
  for (int u = 0; u < tree.node_count(); ++u)
    if (tree.children(u).size() > 1)
      throw Error("NotAPath", "node " + std::to_string(u) + " has " +
                                  std::to_string(tree.children(u).size()) +
                                  " children");
  const Rat mass = z.mass();
  if (mp::denominator(mass) != 1 || mass < 1)
    throw Error("MassMismatch", "total mass must be a positive integer");
  const long long k = Int(mp::numerator(mass)).convert_to<long long>();
  if (auto v = validate(z, MeasureKind::Inner, mass, Int(m)))
    throw Error(v->code, "line measure: " + v->detail);

  // Positions along the path in root-first order; aggregates are
  // non-increasing, so each level h settles at the deepest position whose
  // aggregate, lifted by (i-1)/m, still reaches h.
  const auto& chain = tree.top_down_order();
  Ensemble e{z.tree(), m, {}, z, std::vector<Rat>(m, Rat(0))};
  for (long long i = 1; i <= m; ++i) {
    const Rat lift(i - 1, m);
    std::vector<int> placed;
    for (long long h = 1; h <= k; ++h) {
      int deepest = -1;
      for (int node : chain) {
        if (z.value(node) + lift >= Rat(h))
          deepest = node;
        else
          break;
      }
      if (deepest < 0)
        throw Error("MassMismatch", "mass level unreachable from the root");
      placed.push_back(deepest);
    }
    e.members.emplace_back(placed);
  }
  require_clean(e, "after line rounding");
  return e;
}

SampleDraw sample_member(BitStream& bits, long long m) {
  if (m < 1) throw Error("GranularityTooSmall", "need at least one member");
  if (m == 1) return SampleDraw{0, 0, false};
  const int width = bit_width_for(static_cast<std::uint64_t>(m));
  const std::uint64_t mask =
      width >= 64 ? ~0ULL : ((1ULL << width) - 1);
  std::uint64_t draw = bits.bits(width);
  for (int attempt = 0; attempt <= 8; ++attempt) {
    if (draw < static_cast<std::uint64_t>(m))
      return SampleDraw{static_cast<long long>(draw), width, false};
    // Recycle through a fixed bijection of the width-bit space instead of
    // consuming fresh bits; odd multiplier keeps the map invertible.
    draw = (draw * 2862933555777941757ULL + 3037000493ULL) & mask;
  }
  return SampleDraw{static_cast<long long>(draw % static_cast<std::uint64_t>(m)),
                    width, true};
}

Rat advised_cost(const Ensemble& e) {
  if (e.member_cost.empty()) throw Error("SizeMismatch", "empty ensemble");
  Rat best = e.member_cost.front();
  for (const Rat& c : e.member_cost)
    if (c < best) best = c;
  return best;
}

Rat average_cost(const Ensemble& e) {
  if (e.member_cost.empty()) throw Error("SizeMismatch", "empty ensemble");
  Rat total(0);
  for (const Rat& c : e.member_cost) total += c;
  return total / Rat(e.m);
}

std::string ensemble_json(const Ensemble& e) {
  nlohmann::ordered_json doc;
  doc["m"] = e.m;
  auto members = nlohmann::ordered_json::array();
  for (const auto& c : e.members) members.push_back(c.leaves);
  doc["members"] = std::move(members);
  auto costs = nlohmann::ordered_json::array();
  for (const Rat& c : e.member_cost) costs.push_back(rat_to_string(c));
  doc["member_cost"] = std::move(costs);
  doc["z"] = nlohmann::ordered_json::parse(e.z.debug_json());
  return doc.dump();
}

}  // namespace kserver
