#include <doctest.h>

#include <random>

#include "generators.hpp"
#include "kserver/error.hpp"
#include "kserver/measure.hpp"
#include "oracles.hpp"

using namespace kserver;

TEST_CASE("sigma pointwise") {
  CHECK(sigma(Rat(1, 2)) == Rat(0));
  CHECK(sigma(Rat(1)) == Rat(1));
  CHECK(sigma(Rat(3, 4)) == Rat(1, 2));
  CHECK(sigma(Rat(0)) == Rat(0));
  CHECK(sigma(Rat(5, 2)) == Rat(2));   // sigma(k + 1/2) = k
  CHECK(sigma(Rat(9, 4)) == Rat(2));
  CHECK(sigma(Rat(11, 4)) == Rat(5, 2));
  CHECK_THROWS_AS((void)sigma(Rat(-1, 2)), Error);

  std::mt19937 rng(1);
  auto draw = [&] { return Rat(static_cast<int>(rng() % 400), 40); };
  for (int i = 0; i < 500; ++i) {
    const Rat x = draw(), y = draw();
    CHECK(sigma(x) == oracle::sigma_reference(x));
    // monotone and 2-Lipschitz
    const Rat lo = std::min(x, y), hi = std::max(x, y);
    CHECK(sigma(lo) <= sigma(hi));
    CHECK(sigma(hi) - sigma(lo) <= 2 * (hi - lo));
    // superadditive
    CHECK(sigma(x + y) >= sigma(x) + sigma(y));
  }

  SUBCASE("maps multiples of 1/(2m) to multiples of 1/m") {
    for (int m = 1; m <= 12; ++m)
      for (int units = 0; units <= 6 * m; ++units) {
        const Rat img = sigma(Rat(units, 2 * m));
        CHECK(frac_rat(img * m) == Rat(0));
      }
  }
}

TEST_CASE("mass vectors") {
  // Root with two leaves, plus one deeper pair.
  const auto tree = make_tree({-1, 0, 0, 2, 2},
                              {Rat(0), Rat(3), Rat(3), Rat(1), Rat(1)});

  SUBCASE("from_config counts multiplicity") {
    ServerConfiguration c({1, 3, 3});
    const auto z = MassVector::from_config(tree, c);
    CHECK(z.mass() == Rat(3));
    CHECK(z.value(1) == Rat(1));
    CHECK(z.value(2) == Rat(2));
    CHECK(z.value(3) == Rat(2));
    CHECK(z.value(4) == Rat(0));
    CHECK(z.point_mass(2) == Rat(0));
    CHECK(!validate(z, MeasureKind::Leaf, Rat(3)));
    CHECK(!validate(z, MeasureKind::Inner, Rat(3), Int(1)));
  }

  SUBCASE("from_leaf_masses aggregates bottom-up") {
    const auto z = MassVector::from_leaf_masses(
        tree, {Rat(1, 2), Rat(1, 4), Rat(3, 4)});  // leaves 1, 3, 4
    CHECK(z.mass() == Rat(3, 2));
    CHECK(z.value(2) == Rat(1));
    CHECK(z.leaf_masses() == std::vector<Rat>{Rat(1, 2), Rat(1, 4), Rat(3, 4)});
  }

  SUBCASE("validate reports violations") {
    // Internal point mass at node 2: inner-valid, leaf-invalid.
    const auto z = MassVector::from_aggregates(
        tree, {Rat(2), Rat(1), Rat(1), Rat(1, 2), Rat(0)});
    CHECK(!validate(z, MeasureKind::Inner, Rat(2)));
    const auto bad = validate(z, MeasureKind::Leaf, Rat(2));
    REQUIRE(bad.has_value());
    CHECK(bad->code == "InternalMass");
    CHECK(bad->node == 2);

    const auto wrong_mass = validate(z, MeasureKind::Inner, Rat(3));
    REQUIRE(wrong_mass.has_value());
    CHECK(wrong_mass->code == "RootMass");

    // Aggregate below the children's sum.
    const auto sub = MassVector::from_aggregates(
        tree, {Rat(2), Rat(1), Rat(1, 4), Rat(1, 2), Rat(0)});
    const auto v = validate(sub, MeasureKind::Inner, Rat(2));
    REQUIRE(v.has_value());
    CHECK(v->code == "SupersetConstraint");

    // Not barely-fractional at m=2.
    const auto fine = MassVector::from_leaf_masses(tree, {Rat(1, 3), Rat(1, 3), Rat(1, 3)});
    const auto nb = validate(fine, MeasureKind::Leaf, Rat(1), Int(2));
    REQUIRE(nb.has_value());
    CHECK(nb->code == "NotBarely");
  }
}

TEST_CASE("sigma_map") {
  std::mt19937 rng(7);
  SUBCASE("integral measures are fixed") {
    for (int t = 0; t < 20; ++t) {
      const auto tree = gen::random_tree(rng, 6);
      const auto z = gen::random_leaf_measure(rng, tree, 1, 3);
      CHECK(sigma_map(z) == z);
    }
  }
  SUBCASE("chain at 1.25 drops to 1") {
    const auto chain = make_tree({-1, 0, 1}, {Rat(0), Rat(2), Rat(1)});
    const auto z = MassVector::from_aggregates(chain, {Rat(5, 4), Rat(5, 4), Rat(5, 4)});
    const auto out = sigma_map(z);
    for (int u = 0; u < 3; ++u) CHECK(out.value(u) == Rat(1));
    CHECK(!validate(out, MeasureKind::Inner, Rat(1)));
  }
  SUBCASE("halves granularity on random inner measures") {
    for (int m = 1; m <= 12; ++m) {
      for (int t = 0; t < 10; ++t) {
        const auto tree = gen::random_tree(rng, 7);
        const auto z = gen::random_inner_measure(rng, tree, 2 * m);
        const auto out = sigma_map(z);
        CHECK(!validate(out, MeasureKind::Inner, sigma(z.mass()), Int(m)));
      }
    }
  }
  SUBCASE("mass k + 1/2 maps to k") {
    const auto tree = make_tree({-1, 0, 0}, {Rat(0), Rat(1), Rat(1)});
    const auto z = MassVector::from_leaf_masses(tree, {Rat(1), Rat(1, 2)});
    CHECK(sigma_map(z).mass() == Rat(1));
  }
}

TEST_CASE("optimal transport distance") {
  std::mt19937 rng(13);

  SUBCASE("zero on equal, two for a sibling unit move") {
    const auto star = make_tree({-1, 0, 0}, {Rat(0), Rat(1), Rat(1)});
    const auto a = MassVector::from_leaf_masses(star, {Rat(1), Rat(0)});
    const auto b = MassVector::from_leaf_masses(star, {Rat(0), Rat(1)});
    CHECK(ot_distance(a, a) == Rat(0));
    CHECK(ot_distance(a, b) == Rat(2));
    CHECK(positive_movement(a, b) == Rat(1));
    CHECK(positive_movement(a, b) + positive_movement(b, a) == ot_distance(a, b));
  }

  SUBCASE("mass mismatch is an error") {
    const auto star = make_tree({-1, 0, 0}, {Rat(0), Rat(1), Rat(1)});
    const auto a = MassVector::from_leaf_masses(star, {Rat(1), Rat(0)});
    const auto b = MassVector::from_leaf_masses(star, {Rat(1), Rat(1)});
    CHECK_THROWS_AS((void)ot_distance(a, b), Error);
  }

  SUBCASE("matches brute-force transport on random leaf measures") {
    for (int trial = 0; trial < 150; ++trial) {
      const auto tree = gen::random_tree(rng, 3 + static_cast<int>(rng() % 5));
      const int den = 1 + static_cast<int>(rng() % 3);
      const int units = 1 + static_cast<int>(rng() % 7);
      // Build both measures from explicit unit placements.
      std::vector<int> from_units, to_units;
      std::vector<Rat> fm(tree->leaf_count(), Rat(0)), tm(tree->leaf_count(), Rat(0));
      for (int i = 0; i < units; ++i) {
        const int a = static_cast<int>(rng() % tree->leaf_count());
        const int b = static_cast<int>(rng() % tree->leaf_count());
        from_units.push_back(tree->leaves()[a]);
        to_units.push_back(tree->leaves()[b]);
        fm[a] += Rat(1, den);
        tm[b] += Rat(1, den);
      }
      const auto za = MassVector::from_leaf_masses(tree, fm);
      const auto zb = MassVector::from_leaf_masses(tree, tm);
      const Rat expected =
          oracle::brute_unit_transport(*tree, from_units, to_units) / den;
      CHECK(ot_distance(za, zb) == expected);
    }
  }

  SUBCASE("triangle inequality on random triples") {
    for (int trial = 0; trial < 100; ++trial) {
      const auto tree = gen::random_tree(rng, 4 + static_cast<int>(rng() % 4));
      const auto a = gen::random_leaf_measure(rng, tree, 4, 8);
      const auto b = gen::random_leaf_measure(rng, tree, 4, 8);
      const auto c = gen::random_leaf_measure(rng, tree, 4, 8);
      CHECK(ot_distance(a, c) <= ot_distance(a, b) + ot_distance(b, c));
    }
  }
}
