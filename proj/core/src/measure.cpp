#include "kserver/measure.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "kserver/error.hpp"

namespace kserver {

namespace {

Int gcd_int(Int a, Int b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    Int r = a % b;
    a = b;
    b = r;
  }
  return a;
}

Int lcm_int(const Int& a, const Int& b) {
  if (a == 0 || b == 0) return 0;
  return a / gcd_int(a, b) * b;
}

}  // namespace

MassVector::MassVector(TreePtr tree, Int den, std::vector<Int> num)
    : tree_(std::move(tree)), den_(std::move(den)), num_(std::move(num)) {
  // Normalize so equal measures compare equal componentwise.
  Int g = den_;
  for (const Int& v : num_) {
    g = gcd_int(g, v);
    if (g == 1) break;
  }
  if (g > 1) {
    den_ /= g;
    for (Int& v : num_) v /= g;
  }
}

MassVector MassVector::from_aggregates(TreePtr tree, const std::vector<Rat>& agg) {
  if (!tree) throw Error("EmptyTree", "null tree");
  if (agg.size() != static_cast<std::size_t>(tree->node_count()))
    throw Error("SizeMismatch", "aggregate count != node count");
  namespace mp = boost::multiprecision;
  Int den = 1;
  for (const Rat& v : agg) den = lcm_int(den, Int(mp::denominator(v)));
  std::vector<Int> num(agg.size());
  for (std::size_t u = 0; u < agg.size(); ++u)
    num[u] = Int(mp::numerator(agg[u])) * (den / Int(mp::denominator(agg[u])));
  return MassVector(std::move(tree), std::move(den), std::move(num));
}

MassVector MassVector::from_leaf_masses(TreePtr tree, const std::vector<Rat>& leaf_masses) {
  if (!tree) throw Error("EmptyTree", "null tree");
  if (leaf_masses.size() != static_cast<std::size_t>(tree->leaf_count()))
    throw Error("SizeMismatch", "leaf mass count != leaf count");
  std::vector<Rat> agg(tree->node_count(), Rat(0));
  for (int i = 0; i < tree->leaf_count(); ++i) agg[tree->leaves()[i]] = leaf_masses[i];
  const auto& order = tree->top_down_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int u = *it;
    for (int c : tree->children(u)) agg[u] += agg[c];
  }
  return from_aggregates(std::move(tree), agg);
}

MassVector MassVector::from_config(TreePtr tree, const ServerConfiguration& c) {
  std::vector<Rat> leaf_masses(tree->leaf_count(), Rat(0));
  for (int leaf : c.leaves) {
    const int idx = tree->leaf_index(leaf);
    if (idx < 0) throw Error("UnknownLeaf", std::to_string(leaf));
    leaf_masses[idx] += 1;
  }
  return from_leaf_masses(std::move(tree), leaf_masses);
}

Rat MassVector::point_mass(int u) const {
  Int v = num_[u];
  for (int c : tree_->children(u)) v -= num_[c];
  return Rat(v, den_);
}

std::vector<Rat> MassVector::leaf_masses() const {
  std::vector<Rat> out;
  out.reserve(tree_->leaf_count());
  for (int leaf : tree_->leaves()) out.push_back(value(leaf));
  return out;
}

bool MassVector::operator==(const MassVector& other) const {
  return WeightedTree::same_structure(*tree_, *other.tree_) && den_ == other.den_ &&
         num_ == other.num_;
}

std::string MassVector::debug_json() const {
  nlohmann::ordered_json doc;
  doc["denominator"] = den_.str();
  doc["numerators"] = nlohmann::ordered_json::array();
  for (const Int& v : num_) doc["numerators"].push_back(v.str());
  return doc.dump();
}

std::optional<MeasureViolation> validate(const MassVector& z, MeasureKind kind,
                                         const Rat& expected_mass, const Int& barely_m) {
  const WeightedTree& tree = *z.tree();
  if (z.mass() != expected_mass)
    return MeasureViolation{"RootMass", tree.root(),
                            "total mass " + rat_to_string(z.mass()) + " != " +
                                rat_to_string(expected_mass)};
  for (int u = 0; u < tree.node_count(); ++u) {
    if (z.value(u) < 0)
      return MeasureViolation{"NegativeAggregate", u, rat_to_string(z.value(u))};
    const Rat pm = z.point_mass(u);
    if (pm < 0)
      return MeasureViolation{"SupersetConstraint", u,
                              "children exceed aggregate by " + rat_to_string(-pm)};
    if (kind == MeasureKind::Leaf && tree.is_internal(u) && pm != 0)
      return MeasureViolation{"InternalMass", u, rat_to_string(pm)};
    if (barely_m > 0) {
      const Rat scaled = z.value(u) * Rat(barely_m);
      if (denominator(scaled) != 1)
        return MeasureViolation{"NotBarely", u,
                                rat_to_string(z.value(u)) + " not a multiple of 1/" +
                                    barely_m.str()};
    }
  }
  return std::nullopt;
}

Rat sigma(const Rat& x) {
  if (x < 0) throw Error("NegativeInput", rat_to_string(x));
  const Rat f(floor_rat(x));
  const Rat excess = 2 * (x - f) - 1;
  return excess > 0 ? f + excess : f;
}

MassVector sigma_map(const MassVector& z) {
  std::vector<Rat> agg(z.node_count());
  for (int u = 0; u < z.node_count(); ++u) {
    const Rat v = z.value(u);
    if (v < 0) throw Error("InvalidMeasure", "negative aggregate at " + std::to_string(u));
    agg[u] = sigma(v);
  }
  return MassVector::from_aggregates(z.tree(), agg);
}

Rat ot_distance(const MassVector& a, const MassVector& b) {
  if (!WeightedTree::same_structure(*a.tree(), *b.tree()))
    throw Error("TreeMismatch", "measures live on different trees");
  if (a.mass() != b.mass())
    throw Error("MassMismatch",
                rat_to_string(a.mass()) + " vs " + rat_to_string(b.mass()));
  const WeightedTree& tree = *a.tree();
  Rat total = 0;
  for (int u = 1; u < tree.node_count(); ++u) {
    const Rat d = a.value(u) - b.value(u);
    if (d != 0) total += tree.weight(u) * (d > 0 ? d : -d);
  }
  return total;
}

Rat positive_movement(const MassVector& from, const MassVector& to) {
  if (!WeightedTree::same_structure(*from.tree(), *to.tree()))
    throw Error("TreeMismatch", "measures live on different trees");
  const WeightedTree& tree = *from.tree();
  Rat total = 0;
  for (int u = 1; u < tree.node_count(); ++u) {
    const Rat d = to.value(u) - from.value(u);
    if (d > 0) total += tree.weight(u) * d;
  }
  return total;
}

}  // namespace kserver
