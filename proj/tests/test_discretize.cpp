#include <doctest.h>

#include <map>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "kserver/discretize.hpp"
#include "kserver/error.hpp"
#include "kserver/measure.hpp"
#include "oracles.hpp"

using namespace kserver;

namespace {

// Two leaves under the root, unit edge weights.
TreePtr two_leaf_star() {
  return make_tree({-1, 0, 0}, {Rat(0), Rat(1), Rat(1)});
}

// root - hub - {a, b}: one internal node above the two leaves.
TreePtr hub_tree() {
  return make_tree({-1, 0, 1, 1}, {Rat(0), Rat(5), Rat(1), Rat(1)});
}

// Random inner measure with point masses in multiples of 1/den and total
// mass units/den (compositions over all nodes, root included).
MassVector random_barely_inner(std::mt19937& rng, const TreePtr& tree,
                               int units, int den) {
  const int nodes = tree->node_count();
  std::vector<int> pm(nodes, 0);
  for (int i = 0; i < units; ++i) pm[static_cast<int>(rng() % nodes)]++;
  std::vector<Rat> agg(nodes, Rat(0));
  const auto& order = tree->top_down_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    agg[*it] = Rat(pm[*it], den);
    for (int c : tree->children(*it)) agg[*it] += agg[c];
  }
  return MassVector::from_aggregates(tree, agg);
}

// Leaf measure of mass k with the requested leaf at exactly 1 and the
// remaining k-1 spread over other leaves in units of 1/8, capped at 1.
MassVector pinned_fractional(std::mt19937& rng, const TreePtr& tree, int k,
                             int request_leaf) {
  const auto& leaves = tree->leaves();
  std::vector<int> units(leaves.size(), 0);
  int request_pos = tree->leaf_index(request_leaf);
  units[request_pos] = 8;
  for (int chunk = 0; chunk < 8 * (k - 1); ++chunk) {
    std::vector<int> eligible;
    for (int i = 0; i < static_cast<int>(leaves.size()); ++i)
      if (i != request_pos && units[i] < 8) eligible.push_back(i);
    units[static_cast<int>(rng() % eligible.size())]++;
  }
  std::vector<Rat> masses;
  for (int u : units) masses.emplace_back(u, 8);
  return MassVector::from_leaf_masses(tree, masses);
}

Rat unit_histogram_mass(const HysteresisState& st, int leaf) {
  long long n = 0;
  for (const MassUnit& mu : st.units)
    if (mu.actual_leaf == leaf) ++n;
  return Rat(n, st.m);
}

}  // namespace

TEST_CASE("discretize: init replicates the start configuration everywhere") {
  auto tree = two_leaf_star();
  auto st = hysteresis_init(tree, 1, 3, ServerConfiguration({1}));
  auto base = MassVector::from_config(tree, ServerConfiguration({1}));
  CHECK(st.m_prime == 9);
  CHECK(st.source == base);
  CHECK(st.z1 == base);
  CHECK(st.z2 == base);
  CHECK(st.z4 == base);
  CHECK(st.deferred == base);
  CHECK(st.z3.mass() == Rat(3, 2));
  REQUIRE(st.units.size() == 3);
  for (const auto& mu : st.units) {
    CHECK(mu.virtual_node == 1);
    CHECK(mu.actual_leaf == 1);
  }
  CHECK(st.costs.source == Rat(0));
  CHECK(st.costs.deferred == Rat(0));

  CHECK_THROWS_AS(hysteresis_init(tree, 0, 3, ServerConfiguration(std::vector<int>{})),
                  Error);
  CHECK_THROWS_AS(hysteresis_init(tree, 1, 2, ServerConfiguration({1})),
                  Error);  // needs m >= 2k^2 + k
  CHECK_THROWS_AS(hysteresis_init(tree, 1, 3, ServerConfiguration({1, 2})),
                  Error);  // size mismatch
}

TEST_CASE("flooring stage: fixes integral measures, floors below one half") {
  auto tree = two_leaf_star();
  auto integral = MassVector::from_config(tree, ServerConfiguration({2}));
  CHECK(step1_sigma(integral) == integral);

  auto x = MassVector::from_leaf_masses(tree, {Rat(2, 5), Rat(3, 5)});
  auto z1 = step1_sigma(x);
  CHECK(z1.value(1) == Rat(0));
  CHECK(z1.value(2) == Rat(1, 5));
  CHECK(z1.value(0) == Rat(1));  // root mass is preserved
}

TEST_CASE("flooring stage: trajectory cost at most doubles") {
  std::mt19937 rng(4101);
  for (int trial = 0; trial < 50; ++trial) {
    auto tree = gen::random_tree(rng, 2 + static_cast<int>(rng() % 7));
    auto prev = gen::random_leaf_measure(rng, tree, 6, 12);
    auto prev_floor = step1_sigma(prev);
    for (int t = 0; t < 8; ++t) {
      auto next = gen::random_leaf_measure(rng, tree, 6, 12);
      auto next_floor = step1_sigma(next);
      CHECK(ot_distance(prev_floor, next_floor) <=
            Rat(2) * ot_distance(prev, next));
      prev = next;
      prev_floor = next_floor;
    }
  }
}

TEST_CASE("hysteresis: a target equal to the state moves nothing") {
  auto tree = two_leaf_star();
  auto st = hysteresis_init(tree, 1, 3, ServerConfiguration({1}));
  auto before = st.z2;
  step2_hysteresis(st, before);
  CHECK(st.z2 == before);
  CHECK(st.costs.z2 == Rat(0));
}

TEST_CASE("hysteresis: sub-threshold oscillation is absorbed") {
  auto tree = two_leaf_star();
  auto st = hysteresis_init(tree, 1, 3, ServerConfiguration({1}));
  auto x_a = MassVector::from_leaf_masses(tree, {Rat(11, 20), Rat(9, 20)});
  auto x_b = MassVector::from_leaf_masses(tree, {Rat(9, 20), Rat(11, 20)});

  pipeline_feed(st, x_a);  // t = 1: drains the start leaf down to 1/9
  CHECK(st.z2.value(1) == Rat(1, 9));
  CHECK(st.z2.value(2) == Rat(0));

  pipeline_feed(st, x_b);  // t = 2: remaining sliver retreats to the root
  auto rest_state = st.z2;
  CHECK(rest_state.value(1) == Rat(0));
  CHECK(rest_state.value(2) == Rat(0));
  CHECK(rest_state.value(0) == Rat(1));
  auto cost_at_rest = st.costs.z2;
  CHECK(cost_at_rest == Rat(1));  // 8/9 up at t=1, final 1/9 up at t=2

  for (int t = 3; t <= 12; ++t) {
    pipeline_feed(st, t % 2 == 1 ? x_a : x_b);
    CHECK(st.z2 == rest_state);
    CHECK(st.costs.z2 == cost_at_rest);
  }
  // The deferred output never moved either: the oscillation is free.
  CHECK(st.deferred ==
        MassVector::from_config(tree, ServerConfiguration({1})));
  CHECK(st.costs.deferred == Rat(0));
}

TEST_CASE("hysteresis: an exactly-threshold target is tracked") {
  auto tree = two_leaf_star();
  auto st = hysteresis_init(tree, 1, 3, ServerConfiguration({1}));
  auto t_a = MassVector::from_aggregates(tree, {Rat(1), Rat(1, 9), Rat(0)});
  auto t_b = MassVector::from_aggregates(tree, {Rat(1), Rat(0), Rat(1, 9)});

  step2_hysteresis(st, t_a);
  CHECK(st.z2 == t_a);
  CHECK(st.costs.z2 == Rat(8, 9));
  for (int t = 2; t <= 7; ++t) {
    auto cost_before = st.costs.z2;
    const auto& target = (t % 2 == 0) ? t_b : t_a;
    step2_hysteresis(st, target);
    CHECK(st.z2 == target);
    CHECK(st.costs.z2 - cost_before == Rat(2, 9));
  }
}

TEST_CASE("hysteresis: greedy matches exhaustive minimization with ties "
          "broken toward staying put") {
  std::mt19937 rng(90210);
  for (int trial = 0; trial < 40; ++trial) {
    const int nodes = 2 + static_cast<int>(rng() % 5);
    auto tree = gen::random_tree(rng, nodes);
    auto st = hysteresis_init(tree, 1, 3,
                              gen::random_config(rng, *tree, 1));
    auto feasible = oracle::enumerate_barely_inner(tree, 1, 9);
    st.z2 = feasible[rng() % feasible.size()];
    auto prev = st.z2;
    auto target = random_barely_inner(rng, tree, 12, 12);

    step2_hysteresis(st, target);
    const auto& got = st.z2;

    Rat got_obj = ot_distance(prev, got) + ot_distance(got, target);
    Rat best_obj = got_obj;
    for (const auto& z : feasible) {
      Rat obj = ot_distance(prev, z) + ot_distance(z, target);
      if (obj < best_obj) best_obj = obj;
    }
    CHECK(got_obj == best_obj);

    Rat best_tie = ot_distance(prev, got);
    for (const auto& z : feasible) {
      Rat obj = ot_distance(prev, z) + ot_distance(z, target);
      if (obj == best_obj) {
        Rat tie = ot_distance(prev, z);
        if (tie > best_tie) best_tie = tie;
      }
    }
    CHECK(ot_distance(prev, got) == best_tie);

    // The previous state is itself feasible, so the minimum telescopes.
    CHECK(got_obj == ot_distance(prev, target));
    // Never more than (2k+1)/m' below the target anywhere.
    for (int u = 0; u < tree->node_count(); ++u)
      CHECK(got.value(u) >= target.value(u) - Rat(3, 9));
  }
}

TEST_CASE("rescale stage: exact factor and mass window") {
  auto tree = two_leaf_star();
  auto z2 = MassVector::from_aggregates(tree, {Rat(1), Rat(4, 9), Rat(5, 9)});
  auto z3 = step3_scale(z2, 1, 3);  // lambda = 9/6 = 3/2
  CHECK(z3.value(0) == Rat(3, 2));
  CHECK(z3.value(1) == Rat(2, 3));
  CHECK(z3.value(2) == Rat(5, 6));
  CHECK(!validate(z3, MeasureKind::Inner, Rat(3, 2), Int(6)));

  auto z4 = step4_sigma(z3);
  CHECK(z4.value(0) == Rat(1));
  CHECK(z4.value(1) == Rat(1, 3));
  CHECK(z4.value(2) == Rat(2, 3));
  CHECK(!validate(z4, MeasureKind::Inner, Rat(1), Int(3)));

  CHECK_THROWS_AS((void)step3_scale(z2, 2, 9), Error);  // m below 2k^2 + k

  // At the smallest legal granularity the rescaled mass hits k + 1/2 exactly.
  auto st = hysteresis_init(tree, 2, 10, ServerConfiguration({1, 2}));
  CHECK(st.m_prime == 25);
  CHECK(st.z3.mass() == Rat(5, 2));
  CHECK(step4_sigma(st.z3).mass() == Rat(2));
}

TEST_CASE("flooring the rescaled stage: halves the granularity, keeps "
          "full nodes full") {
  std::mt19937 rng(777);
  for (int trial = 0; trial < 40; ++trial) {
    const int nodes = 2 + static_cast<int>(rng() % 6);
    auto tree = gen::random_tree(rng, nodes);
    const int m = 3;
    auto z3 = random_barely_inner(rng, tree, 2 * m * 2, 2 * m);  // mass 2
    auto z4 = step4_sigma(z3);
    CHECK(z4.mass() == Rat(2));
    CHECK(!validate(z4, MeasureKind::Inner, Rat(2), Int(m)));
    for (int u = 0; u < tree->node_count(); ++u) {
      if (z3.value(u) >= Rat(1)) CHECK(z4.value(u) >= Rat(1));
      CHECK(z4.value(u) <= z3.value(u));
    }
  }
}

TEST_CASE("deferral: units materialize only at leaves") {
  auto tree = hub_tree();  // leaves 2 (a) and 3 (b), hub 1
  const int k = 1, m = 3;

  SUBCASE("a bounce through an internal node is free") {
    auto st = hysteresis_init(tree, k, m, ServerConfiguration({2}));
    auto at_hub =
        MassVector::from_aggregates(tree, {Rat(1), Rat(1), Rat(0), Rat(0)});
    step5_defer(st, at_hub);
    CHECK(st.deferred ==
          MassVector::from_config(tree, ServerConfiguration({2})));
    CHECK(st.costs.deferred == Rat(0));
    CHECK(st.costs.z4 == Rat(1));  // mass 1 crossed the leaf edge

    auto back =
        MassVector::from_aggregates(tree, {Rat(1), Rat(1), Rat(1), Rat(0)});
    step5_defer(st, back);
    CHECK(st.costs.deferred == Rat(0));  // units were already parked there
    CHECK(st.costs.z4 == Rat(2));
  }

  SUBCASE("a crossing pays the leaf distance exactly once") {
    auto st = hysteresis_init(tree, k, m, ServerConfiguration({2}));
    auto at_hub =
        MassVector::from_aggregates(tree, {Rat(1), Rat(1), Rat(0), Rat(0)});
    step5_defer(st, at_hub);
    auto at_b =
        MassVector::from_aggregates(tree, {Rat(1), Rat(1), Rat(0), Rat(1)});
    step5_defer(st, at_b);
    CHECK(st.costs.deferred == tree->leaf_distance(2, 3));
    CHECK(st.costs.z4 == Rat(2));
    CHECK(st.deferred ==
          MassVector::from_config(tree, ServerConfiguration({3})));
    CHECK(unit_histogram_mass(st, 3) == Rat(1));
  }
}

TEST_CASE("deferral: trajectory cost never exceeds the undeferred cost") {
  std::mt19937 rng(5150);
  for (int trial = 0; trial < 40; ++trial) {
    const int nodes = 3 + static_cast<int>(rng() % 6);
    auto tree = gen::random_tree(rng, nodes);
    int k = 1 + static_cast<int>(rng() % 2);
    if (k > tree->leaf_count()) k = tree->leaf_count();
    const int m = 2 * k * k + k;
    auto st = hysteresis_init(tree, k, m, gen::random_config(rng, *tree, k));
    for (int t = 0; t < 10; ++t) {
      auto z4 = random_barely_inner(rng, tree, k * m, m);
      step5_defer(st, z4);
      CHECK(st.costs.deferred <= st.costs.z4);
      CHECK(!validate(st.deferred, MeasureKind::Leaf, Rat(k), Int(m)));
      for (int leaf : tree->leaves()) {
        CHECK(st.deferred.value(leaf) >= st.z4.value(leaf));
        CHECK(unit_histogram_mass(st, leaf) == st.deferred.value(leaf));
      }
    }
  }
}

TEST_CASE("pipeline: integral lazy trajectories pass through unchanged") {
  std::mt19937 rng(31337);
  for (int trial = 0; trial < 25; ++trial) {
    const int nodes = 3 + static_cast<int>(rng() % 8);
    auto tree = gen::random_tree(rng, nodes);
    int k = 1 + static_cast<int>(rng() % 3);
    if (k > tree->leaf_count()) k = tree->leaf_count();
    auto config = gen::random_config(rng, *tree, k);
    auto st = hysteresis_init(tree, k, 2 * k * k + k, config);
    const auto& leaves = tree->leaves();
    for (int t = 0; t < 8; ++t) {
      int request = leaves[rng() % leaves.size()];
      config.leaves[rng() % k] = request;  // lazy: move one server
      auto x = MassVector::from_config(tree, config);
      const auto& y = pipeline_feed(st, x);
      CHECK(st.z1 == x);
      CHECK(st.z2 == x);
      CHECK(st.z4 == x);
      CHECK(y == x);
    }
    CHECK(st.costs.deferred == st.costs.source);
  }
}

TEST_CASE("pipeline: stage costs obey the discretization chain") {
  std::mt19937 rng(24601);
  for (int trial = 0; trial < 25; ++trial) {
    const int nodes = 4 + static_cast<int>(rng() % 9);
    auto tree = gen::random_tree(rng, nodes);
    if (tree->leaf_count() < 2) continue;
    int k = 1 + static_cast<int>(rng() % 3);
    if (k > tree->leaf_count()) k = tree->leaf_count();
    const long long m = 2LL * k * k + k;
    auto st = hysteresis_init(tree, k, m, gen::random_config(rng, *tree, k));
    const auto& leaves = tree->leaves();
    for (int t = 0; t < 12; ++t) {
      int request = leaves[rng() % leaves.size()];
      auto x = pinned_fractional(rng, tree, k, request);
      auto prev_z2 = st.z2;
      const auto& y = pipeline_feed(st, x);

      CHECK(!validate(st.z2, MeasureKind::Inner, Rat(k), Int(st.m_prime)));
      CHECK(!validate(st.z4, MeasureKind::Inner, Rat(k), Int(m)));
      CHECK(!validate(y, MeasureKind::Leaf, Rat(k), Int(m)));

      // Serving: a fully requested leaf stays fully occupied downstream.
      CHECK(y.value(request) >= Rat(1));

      // Exact decomposition of the hysteresis move, and its mass floor.
      CHECK(ot_distance(prev_z2, st.z2) + ot_distance(st.z2, st.z1) ==
            ot_distance(prev_z2, st.z1));
      for (int u = 0; u < tree->node_count(); ++u)
        CHECK(st.z2.value(u) >=
              st.z1.value(u) - Rat(2 * k + 1, st.m_prime));

      for (int leaf : tree->leaves())
        CHECK(unit_histogram_mass(st, leaf) == y.value(leaf));
    }
    CHECK(st.costs.z1 <= Rat(2) * st.costs.source);
    CHECK(st.costs.z2 <= st.costs.z1);
    CHECK(st.costs.z3 <= Rat(2) * st.costs.z2);
    CHECK(st.costs.z4 <= Rat(2) * st.costs.z3);
    CHECK(st.costs.deferred <= st.costs.z4);
    CHECK(st.costs.deferred <= Rat(8) * st.costs.source);
  }
}

TEST_CASE("pipeline: rejects mismatched input") {
  auto tree = two_leaf_star();
  auto st = hysteresis_init(tree, 1, 3, ServerConfiguration({1}));
  auto heavy = MassVector::from_leaf_masses(tree, {Rat(1), Rat(1)});
  CHECK_THROWS_AS((void)pipeline_feed(st, heavy), Error);  // mass 2, not k
  auto other = MassVector::from_config(hub_tree(), ServerConfiguration({2}));
  CHECK_THROWS_AS((void)pipeline_feed(st, other), Error);  // different tree
}

TEST_CASE("superfluous filter: drops served requests, forwards the rest") {
  auto tree = make_tree({-1, 0, 0, 0}, {Rat(0), Rat(1), Rat(1), Rat(1)});
  const int k = 1, m = 3;

  auto make_forward = [&](HysteresisState& st, std::vector<int>* log) {
    return [&st, tree, log](int leaf) {
      if (log) log->push_back(leaf);
      return pipeline_feed(
          st, MassVector::from_config(tree, ServerConfiguration({leaf})));
    };
  };

  auto st = hysteresis_init(tree, k, m, ServerConfiguration({1}));
  std::vector<int> forwarded;
  SuperfluousFilter filter(st.deferred, make_forward(st, &forwarded));

  std::vector<int> requests = {1, 1, 1, 2, 2, 1, 3, 3, 3, 1, 1};
  for (int r : requests) {
    const auto& y = filter.request(r);
    CHECK(y.value(r) >= Rat(1));  // the request is always served
  }
  CHECK(forwarded == std::vector<int>{2, 1, 3, 1});
  CHECK(filter.forwarded_count() == 4);
  CHECK_FALSE(filter.last_forwarded());  // final request repeated leaf 1

  // The wrapped run over the forwarded subsequence is the same run.
  auto twin = hysteresis_init(tree, k, m, ServerConfiguration({1}));
  auto feed_twin = make_forward(twin, nullptr);
  for (int r : forwarded) feed_twin(r);
  CHECK(twin.costs.deferred == st.costs.deferred);
  CHECK(twin.deferred == st.deferred);

  // Every forwarded request moved at least one unit of output mass.
  CHECK(st.costs.deferred >= Rat(filter.forwarded_count(), m));
}

TEST_CASE("stage trace line: valid json with step and cost fields") {
  auto tree = two_leaf_star();
  auto st = hysteresis_init(tree, 1, 3, ServerConfiguration({1}));
  pipeline_feed(st,
                MassVector::from_leaf_masses(tree, {Rat(1, 2), Rat(1, 2)}));
  auto parsed = nlohmann::json::parse(stage_line_json(st));
  CHECK(parsed["step"] == 1);
  CHECK(parsed["m"] == 3);
  CHECK(parsed["m_prime"] == 9);
  for (const char* stage : {"source", "z1", "z2", "z3", "z4", "deferred"}) {
    CHECK(parsed.contains(stage));
    CHECK(parsed["costs"].contains(stage));
  }
}
