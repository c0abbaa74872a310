// Scale families, self-avoiding path enumeration, loop erasure, and the
// Peierls weight bookkeeping.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "carpetlab/pathgraph.hpp"
#include "carpetlab/rng.hpp"

using namespace carpetlab;

namespace {

// Unit-lattice neighbor count oracle: boxes B(y,1) within reach 40 rho of
// B(x,1) satisfy |x-y|_inf <= 40 rho + 2, minus the box itself.
long long unit_neighbors(long long rho) {
  long long r = 40 * rho + 2;
  return (2 * r + 1) * (2 * r + 1) - 1;
}

}  // namespace

TEST_CASE("box distances are exact integers") {
  auto fam = make_family(1, 8, {{{0, 0}}});
  PathBox unit_a{0, 0, 0}, unit_b{0, 5, 0}, unit_c{0, 0, 2}, tier{1, 0, 0};
  CHECK(box_radius(fam, 0) == 1);
  CHECK(box_radius(fam, 1) == 10);
  CHECK(box_distance(fam, unit_a, unit_b) == 3);   // 5 - 1 - 1
  CHECK(box_distance(fam, unit_a, unit_c) == 0);   // closed boxes touch
  CHECK(box_distance(fam, unit_b, tier) == 0);     // inside the big box
  CHECK(box_distance(fam, PathBox{0, 30, 0}, tier) == 19);
  CHECK(box_distance(fam, unit_a, unit_b) == box_distance(fam, unit_b, unit_a));
}

TEST_CASE("family validation enforces lattice and separation") {
  CHECK_THROWS_AS(make_family(0, 8, {}), error);
  CHECK_THROWS_AS(make_family(1, 1, {}), error);
  // Tier-0 sites live on the rho N^0 = rho lattice.
  CHECK_THROWS_AS(make_family(2, 8, {{{1, 0}}}), error);
  // Pairwise separation at tier 0 must reach rho N / 10.  For rho=10, N=8 the
  // floor is 8, so adjacent grid sites (gap 10) are legal; N=20 on the unit
  // grid makes the floor 2 and neighboring sites violate it.
  CHECK_THROWS_AS(make_family(1, 20, {{{0, 0}, {0, 1}}}), error);
  CHECK_NOTHROW(make_family(10, 8, {{{0, 0}, {0, 10}}}));
  CHECK_NOTHROW(make_family(10, 8, {{{0, 0}, {0, 10 * 8}}}));
}

TEST_CASE("level-0 two-box paths hit the lattice count") {
  auto fam = make_family(1, 8, {});
  for (PathBox start : {PathBox{0, 0, 0}, PathBox{0, 1000, -37}}) {
    auto res = enumerate_paths(start, 0, 2, fam, 10000000);
    CHECK(res.count_per_length[1] == 1);
    CHECK(res.count_per_length[2] == (std::uint64_t)unit_neighbors(1));
    CHECK(res.count_per_length[2] == 7224);
  }
  // Doubling rho scales the reach, and the count follows the oracle.
  auto fam2 = make_family(2, 8, {});
  auto res2 = enumerate_paths(PathBox{0, 0, 0}, 0, 2, fam2, 10000000);
  CHECK(res2.count_per_length[2] == (std::uint64_t)unit_neighbors(2));
}

TEST_CASE("enumeration validates arguments and honors its budget") {
  auto fam = make_family(1, 8, {});
  CHECK_THROWS_AS(enumerate_paths(PathBox{0, 0, 0}, 0, 0, fam), error);
  CHECK_THROWS_AS(enumerate_paths(PathBox{0, 0, 0}, 1, 2, fam), error);  // no tier 1
  CHECK_THROWS_AS(enumerate_paths(PathBox{1, 0, 0}, 0, 2, fam), error);  // start above k
  CHECK_THROWS_AS(enumerate_paths(PathBox{0, 0, 0}, 0, 3, fam, 100), error);
}

TEST_CASE("box_lift swallows sites covered by family boxes") {
  auto fam = make_family(1, 8, {{{0, 0}}});
  auto lifted = box_lift({{3, 3}, {200, 0}, {-7, 2}}, fam);
  REQUIRE(lifted.size() == 3);
  CHECK(lifted[0] == PathBox{1, 0, 0});   // |.|_inf <= 10: inside B((0,0),10)
  CHECK(lifted[1] == PathBox{0, 200, 0}); // far away: keeps its unit box
  CHECK(lifted[2] == PathBox{1, 0, 0});
}

TEST_CASE("loop erasure output is connected with non-neighbors far apart") {
  auto fam = make_family(1, 8, {});
  StreamRng rng(2026);
  int nontrivial = 0;
  for (int trial = 0; trial < 300; ++trial) {
    // A lazy walk with Chebyshev steps <= 40, so consecutive boxes stay in reach.
    std::vector<PathBox> walk;
    long long x = 0, y = 0;
    walk.push_back(PathBox{0, x, y});
    for (int s = 0; s < 40; ++s) {
      x += (long long)rng.next_below(39) - 19;
      y += (long long)rng.next_below(39) - 19;
      walk.push_back(PathBox{0, x, y});
    }
    auto le = loop_erase(walk, fam);
    if (le.degenerate) continue;
    ++nontrivial;
    validate_path(fam, le.path);  // throws on repeats or broken links
    const auto& b = le.path.boxes;
    for (std::size_t i = 0; i < b.size(); ++i)
      for (std::size_t j = i + 2; j < b.size(); ++j)
        CHECK(box_distance(fam, b[i], b[j]) > 40);
  }
  CHECK(nontrivial >= 250);
}

TEST_CASE("loop erasure rejects broken input and degenerates gracefully") {
  auto fam = make_family(1, 8, {});
  std::vector<PathBox> jump{{0, 0, 0}, {0, 100, 0}};
  CHECK_THROWS_AS(loop_erase(jump, fam), error);
  CHECK(loop_erase({{0, 0, 0}}, fam).degenerate);
  CHECK(loop_erase({}, fam).degenerate);
}

TEST_CASE("admissibility matches the closed-form unit-lattice sum") {
  auto fam = make_family(1, 8, {});
  const double beta = 1.0 / 20000.0;
  auto rep = admissibility_check(fam, beta);
  CHECK(rep.admissible);
  // With no family boxes the worst sum is the translation-invariant
  // unit-unit sum: 7224 sqrt(beta * beta).
  CHECK_THAT(rep.worst_sum, Catch::Matchers::WithinRel(7224.0 * beta, 1e-12));

  auto tight = admissibility_check(fam, 1.0 / 14000.0);  // 7224/14000 > 1/2
  CHECK_FALSE(tight.admissible);
  CHECK_THROWS_AS(cumulative_weight(PathBox{0, 0, 0}, fam, 1.0 / 14000.0, 2), error);
}

TEST_CASE("cumulative weight stays below one and counts match enumeration") {
  auto fam = make_family(1, 8, {});
  const double beta = 1.0 / 20000.0;
  auto ws = cumulative_weight(PathBox{0, 0, 0}, fam, beta, 3, 100000000);
  CHECK(ws.total <= 1.0);
  CHECK(ws.total > 0.0);
  CHECK(ws.count_per_length[1] == 1);
  CHECK(ws.count_per_length[2] == 7224);
  // Single-box path weight is beta; two-box paths add 7224 beta^2.
  CHECK_THAT(ws.partial[1], Catch::Matchers::WithinRel((double)beta, 1e-12));
  CHECK_THAT(ws.partial[2], Catch::Matchers::WithinRel(7224.0 * beta * beta, 1e-9));
}

TEST_CASE("fused and unfused weight sums agree") {
  // A family box near the start makes the mixed-tier terms nontrivial.
  auto fam = make_family(1, 8, {{{8, 8}}});
  const double beta = 1.0 / 20000.0;
  auto fused = cumulative_weight(PathBox{0, 0, 0}, fam, beta, 3, 200000000, true);
  auto plain = cumulative_weight(PathBox{0, 0, 0}, fam, beta, 3, 200000000, false);
  REQUIRE(fused.count_per_length == plain.count_per_length);
  for (std::size_t len = 1; len < fused.partial.size(); ++len)
    CHECK_THAT(fused.partial[len],
               Catch::Matchers::WithinRel(plain.partial[len], 1e-9));
  CHECK(fused.nodes < plain.nodes);  // the fused leaf layer is the point
}

TEST_CASE("planted tier-1 paths keep a majority of unit boxes") {
  auto fam = make_family(1, 8, {{{0, 0}}});
  auto res = enumerate_paths(PathBox{1, 0, 0}, 1, 3, fam, 200000000);
  CHECK(res.count_per_length[2] > 0);
  // sqrt(8) rounds up to 3: from there on, at least half the boxes are unit.
  for (int len = 3; len <= 3; ++len) {
    CHECK(res.s0_violations[(std::size_t)len] == 0);
    CHECK(res.min_s0_fraction[(std::size_t)len] >= 0.5);
  }
}

TEST_CASE("length bound report splits vacuous and checked paths") {
  auto fam = make_family(1, 8, {});
  auto res = enumerate_paths(PathBox{0, 0, 0}, 0, 2, fam, 10000000, true);
  auto rep = check_length_bound(res.paths, 0, fam);
  // k = 0: every path has diameter >= 1 = N^0, so nothing is vacuous, and the
  // sqrt gate N^0 = 1 is met by length-1 paths already.
  CHECK(rep.c_bound_applicable);
  CHECK(rep.vacuous == 0);
  CHECK(rep.checked == res.paths.size());
  CHECK(rep.sqrt_violations == 0);
}

TEST_CASE("box fraction report only applies beyond the proof constant") {
  auto fam = make_family(1, 8, {});
  auto res = enumerate_paths(PathBox{0, 0, 0}, 0, 2, fam, 10000000, true);
  auto small_c = check_box_fraction(res.paths, 0, fam, 2.0);
  CHECK(small_c.applicable);
  CHECK(small_c.checked == res.paths.size());
  auto big_c = check_box_fraction(res.paths, 0, fam, 10000.0);
  CHECK_FALSE(big_c.applicable);
  CHECK(big_c.checked == 0);
}
