#include <doctest.h>

#include <cmath>
#include <random>

#include "generators.hpp"
#include "kserver/antiserver.hpp"
#include "kserver/error.hpp"
#include "kserver/measure.hpp"
#include "oracles.hpp"

using namespace kserver;

namespace {

AntiServerPoint random_point(std::mt19937& rng, TreePtr tree, int k, int grid = 16) {
  const CoordinateLayout layout(*tree);
  AntiServerPoint p{tree, k, std::vector<Rat>(layout.dimension())};
  for (auto& v : p.x) v = Rat(static_cast<int>(rng() % (grid + 1)), grid);
  return p;
}

}  // namespace

TEST_CASE("coordinate layout") {
  const auto tree = make_tree({-1, 0, 0, 2, 2},
                              {Rat(0), Rat(3), Rat(3), Rat(1), Rat(1)});
  const CoordinateLayout layout(*tree);
  CHECK(layout.count(0) == 3);  // root: three leaves below
  CHECK(layout.count(1) == 1);
  CHECK(layout.count(2) == 2);
  CHECK(layout.dimension() == 3 + 1 + 2 + 1 + 1);
  for (int u = 0; u < tree->node_count(); ++u)
    for (int j = 1; j <= layout.count(u); ++j) {
      CHECK(layout.node_of(layout.index(u, j)) == u);
      CHECK(layout.coord_of(layout.index(u, j)) == j);
    }
}

TEST_CASE("from_config lies in the polytope") {
  std::mt19937 rng(3);
  const auto tree = make_tree({-1, 0, 0, 2, 2, 2},
                              {Rat(0), Rat(3), Rat(3), Rat(1), Rat(1), Rat(1)});
  const CoordinateLayout layout(*tree);

  SUBCASE("occupied leaves carry zero") {
    ServerConfiguration c({1, 3});
    const auto x = from_config(tree, 2, c);
    CHECK(x.at(layout, 1, 1) == Rat(0));
    CHECK(x.at(layout, 3, 1) == Rat(0));
    CHECK(x.at(layout, 4, 1) == Rat(1));
    CHECK(x.at(layout, 2, 1) == Rat(0));  // one server under node 2
    CHECK(x.at(layout, 2, 2) == Rat(1));
    CHECK(x.at(layout, 0, 1) == Rat(0));
    CHECK(x.at(layout, 0, 2) == Rat(0));
    CHECK(x.at(layout, 0, 3) == Rat(1));  // root: j > k
  }

  SUBCASE("all servers under one subtree") {
    ServerConfiguration c({3, 4});
    const auto x = from_config(tree, 2, c);
    CHECK(x.at(layout, 2, 1) == Rat(0));
    CHECK(x.at(layout, 2, 2) == Rat(0));
  }

  SUBCASE("every configuration is exactly feasible") {
    for (int t = 0; t < 100; ++t) {
      const auto rt = gen::random_tree(rng, 3 + static_cast<int>(rng() % 6));
      const int k = 1 + static_cast<int>(rng() % 3);
      const auto c = gen::random_config(rng, *rt, k);
      CHECK(!separation_oracle(from_config(rt, k, c), Rat(0)));
    }
  }
}

TEST_CASE("separation oracle agrees with exhaustive subset enumeration") {
  std::mt19937 rng(17);
  for (int t = 0; t < 300; ++t) {
    const auto tree = gen::random_tree(rng, 3 + static_cast<int>(rng() % 5));
    if (tree->leaf_count() > 5) continue;
    const int k = 1 + static_cast<int>(rng() % 3);
    const auto x = random_point(rng, tree, k);
    const Rat gamma = Rat(static_cast<int>(rng() % 3), 10);
    const auto fast = separation_oracle(x, gamma);
    const auto slow = separation_oracle_exhaustive(x, gamma);
    CHECK(fast.has_value() == slow.has_value());
    if (fast && slow) {
      // Both must report genuine violations of at least gamma.
      CHECK(fast->violated_by > gamma);
      CHECK(slow->violated_by > gamma);
      // The prefix form finds the most violated inequality.
      CHECK(fast->violated_by >= slow->violated_by);
    }
  }
}

TEST_CASE("root constraint cut") {
  const auto tree = make_tree({-1, 0, 0}, {Rat(0), Rat(1), Rat(1)});
  const CoordinateLayout layout(*tree);
  auto x = from_config(tree, 1, ServerConfiguration({1}));
  x.x[layout.index(0, 2)] = Rat(0);  // root coordinate j=2 > k=1 must be >= 1
  const auto cut = separation_oracle(x, Rat(0));
  REQUIRE(cut.has_value());
  CHECK(cut->constraint == "Root");
  CHECK(cut->violated_by == Rat(1));
}

TEST_CASE("leaf measure conversion") {
  // Root with three leaf children, k=1, delta = 1/3.
  const auto tree = make_tree({-1, 0, 0, 0}, {Rat(0), Rat(1), Rat(1), Rat(1)});
  const CoordinateLayout layout(*tree);
  CHECK(delta_for(1) == Rat(1, 3));

  AntiServerPoint x{tree, 1, std::vector<Rat>(layout.dimension(), Rat(1))};
  x.x[layout.index(0, 1)] = Rat(0);
  x.x[layout.index(1, 1)] = Rat(1, 3);
  x.x[layout.index(2, 1)] = Rat(5, 6);
  x.x[layout.index(3, 1)] = Rat(5, 6);

  const auto z = to_leaf_measure(x, Rat(0));
  CHECK(z.mass() == Rat(3, 2));
  CHECK(z.leaf_masses() == std::vector<Rat>{Rat(1), Rat(1, 4), Rat(1, 4)});

  SUBCASE("x = 1 gives zero mass") {
    AntiServerPoint y = x;
    y.x[layout.index(1, 1)] = Rat(1);
    y.x[layout.index(2, 1)] = Rat(2, 3);
    // mass condition: sum = 1 + 2/3 + 5/6 != n - k = 2 -> renormalized
    const auto zz = to_leaf_measure(y, Rat(1, 2));
    CHECK(zz.leaf_masses()[0] == Rat(0));
    CHECK(zz.mass() == Rat(3, 2));
  }

  SUBCASE("violated mass condition beyond tolerance") {
    AntiServerPoint y = x;
    y.x[layout.index(2, 1)] = Rat(1, 3);
    CHECK_THROWS_WITH_AS((void)to_leaf_measure(y, Rat(1, 100)),
                         doctest::Contains("MassCondition"), Error);
  }
}

TEST_CASE("divergence and gradient") {
  SUBCASE("single weighted coordinate closed form") {
    const auto tree = make_tree({-1, 0}, {Rat(0), Rat(1)});
    const CoordinateLayout layout(*tree);
    AntiServerPoint a{tree, 1, std::vector<Rat>(layout.dimension(), Rat(0))};
    AntiServerPoint b = a;
    a.x[layout.index(1, 1)] = Rat(2, 3);
    b.x[layout.index(1, 1)] = Rat(1, 3);
    // (x+d)log((x+d)/(x'+d)) - x + x' with d = 1/3: log(3/2) - 1/3.
    CHECK(divergence(a, b) == doctest::Approx(std::log(1.5) - 1.0 / 3).epsilon(1e-12));
    CHECK(divergence(a, a) == doctest::Approx(0.0));
    CHECK(divergence(b, b) == doctest::Approx(0.0));
  }

  SUBCASE("non-negative, zero only at equality") {
    std::mt19937 rng(5);
    for (int t = 0; t < 50; ++t) {
      const auto tree = gen::random_tree(rng, 5);
      const auto a = random_point(rng, tree, 1);
      const auto b = random_point(rng, tree, 1);
      const double d = divergence(a, b);
      CHECK(d >= -1e-15);
      if (a.x != b.x) CHECK(divergence(a, b) > 0);
    }
  }

  SUBCASE("gradient matches finite differences") {
    std::mt19937 rng(23);
    int checked = 0;
    for (int t = 0; t < 100; ++t) {
      const auto tree = gen::random_tree(rng, 5);
      const CoordinateLayout layout(*tree);
      const int k = 2;
      // Interior points away from the box edges.
      auto interior = [&] {
        auto p = random_point(rng, tree, k, 8);
        for (auto& v : p.x) v = Rat(1, 8) + v * Rat(3, 4);
        return p;
      };
      const auto a = interior();
      const auto b = interior();
      const auto grad = divergence_gradient(a, b);
      auto f = [&](const std::vector<double>& coords) {
        AntiServerPoint p = a;
        for (std::size_t i = 0; i < coords.size(); ++i)
          p.x[i] = rat_from_double(coords[i]);
        return divergence(p, b);
      };
      std::vector<double> at(a.x.size());
      for (std::size_t i = 0; i < at.size(); ++i) at[i] = rat_to_double(a.x[i]);
      const auto fd = oracle::finite_difference(f, at, 1e-6);
      for (std::size_t i = 0; i < fd.size(); ++i)
        CHECK(std::abs(fd[i] - grad[i]) <= 1e-4 * std::max(1.0, std::abs(grad[i])));
      ++checked;
    }
    CHECK(checked == 100);
  }
}

TEST_CASE("positive movement identity") {
  std::mt19937 rng(29);
  for (int t = 0; t < 50; ++t) {
    const auto tree = gen::random_tree(rng, 6);
    const auto a = random_point(rng, tree, 2);
    const auto b = random_point(rng, tree, 2);
    const CoordinateLayout layout(*tree);
    Rat signed_sum = 0;
    for (int idx = 0; idx < layout.dimension(); ++idx) {
      const int u = layout.node_of(idx);
      if (u == tree->root()) continue;
      signed_sum += tree->weight(u) * (a.x[idx] - b.x[idx]);
    }
    CHECK(positive_movement(a, b) - positive_movement(b, a) == signed_sum);
    CHECK(positive_movement(a, a) == Rat(0));
  }
}

TEST_CASE("repair into the polytope") {
  std::mt19937 rng(31);

  SUBCASE("feasible points are unchanged") {
    for (int t = 0; t < 50; ++t) {
      const auto tree = gen::random_tree(rng, 6);
      const int k = 1 + static_cast<int>(rng() % 2);
      auto x = from_config(tree, k, gen::random_config(rng, *tree, k));
      // Put unoccupied leaves at 1 and occupied at delta to sit inside P_delta.
      const CoordinateLayout layout(*tree);
      for (int leaf : tree->leaves()) {
        const int idx = layout.index(leaf, 1);
        if (x.x[idx] == Rat(0)) x.x[idx] = delta_for(k);
      }
      const auto repaired = repair_into_polytope(x, Rat(1, 100));
      CHECK(repaired.x == x.x);
    }
  }

  SUBCASE("tiny perturbations repair to nearby points") {
    const auto tree = make_tree({-1, 0, 0, 1, 1},
                                {Rat(0), Rat(2), Rat(2), Rat(1), Rat(1)});
    const CoordinateLayout layout(*tree);
    auto x = from_config(tree, 1, ServerConfiguration({3}));
    x.x[layout.index(3, 1)] = delta_for(1);
    const Rat eps(1, 1000000000);
    auto y = x;
    y.x[layout.index(4, 1)] -= eps;  // slack coordinate: stays feasible
    y.x[layout.index(2, 1)] -= eps;  // binding at the root prefix: needs a lift
    const auto repaired = repair_into_polytope(y, eps);
    CHECK(!separation_oracle(repaired, Rat(0)));
    for (int idx = 0; idx < layout.dimension(); ++idx) {
      const Rat diff = repaired.x[idx] - x.x[idx];
      CHECK(diff <= Rat(1, 100000000));
      CHECK(diff >= -Rat(1, 100000000));
    }
  }

  SUBCASE("random near points always land in P") {
    for (int t = 0; t < 100; ++t) {
      const auto tree = gen::random_tree(rng, 3 + static_cast<int>(rng() % 5));
      const int k = 1 + static_cast<int>(rng() % 3);
      auto x = random_point(rng, tree, k);
      const auto repaired = repair_into_polytope(x, Rat(2));
      CHECK(!separation_oracle(repaired, Rat(0)));
      const CoordinateLayout layout(*tree);
      for (int leaf : tree->leaves())
        CHECK(repaired.x[layout.index(leaf, 1)] >= delta_for(k));
    }
  }

  SUBCASE("pinned leaf stays pinned") {
    for (int t = 0; t < 100; ++t) {
      const auto tree = gen::random_tree(rng, 3 + static_cast<int>(rng() % 5));
      const int k = 1 + static_cast<int>(rng() % 3);
      const int pin = tree->leaves()[rng() % tree->leaves().size()];
      auto x = random_point(rng, tree, k);
      const auto repaired = repair_into_polytope(x, Rat(2), pin);
      const CoordinateLayout layout(*tree);
      CHECK(repaired.x[layout.index(pin, 1)] == delta_for(k));
      CHECK(!separation_oracle(repaired, Rat(0)));
    }
  }
}

TEST_CASE("dense oracle matches the exact oracle") {
  // Coordinates and gamma live on a dyadic grid, so the double-precision sums
  // are exact and the verdicts must agree bit for bit.
  std::mt19937 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const auto tree = gen::random_tree(rng, 2 + static_cast<int>(rng() % 5));
    const int k = 1 + static_cast<int>(rng() % 2);
    const CoordinateLayout layout(*tree);
    std::vector<double> xd(layout.dimension());
    AntiServerPoint xr{tree, k, std::vector<Rat>(layout.dimension())};
    for (int i = 0; i < layout.dimension(); ++i) {
      const int ticks = static_cast<int>(rng() % 1229) - 102;
      xd[i] = ticks / 1024.0;
      xr.x[i] = Rat(ticks, 1024);
    }
    const int gticks = static_cast<int>(rng() % 5);
    const auto dense = separation_oracle_dense(*tree, k, xd, gticks / 64.0);
    const auto exact = separation_oracle(xr, Rat(gticks, 64));
    REQUIRE(dense.has_value() == exact.has_value());
    if (dense) {
      CHECK(dense->violated_by == rat_to_double(exact->violated_by));
      double norm = 0.0;
      for (double c : dense->coeffs) norm = std::max(norm, std::abs(c));
      CHECK(norm == 1.0);
    }
  }
}
