// Dagger/star carpet pipeline: masks, goodness-filtered levels, corner trims,
// component tracking with certified gaps, and the cluster-carpet variant.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "carpetlab/carpet.hpp"
#include "carpetlab/io.hpp"

using namespace carpetlab;

namespace {

// Dense oracle: rasterize the complement of the final stage on the finest
// grid, label its 4-connected components (pad ring = outside), and measure
// every pairwise closed-box L-inf gap by brute force.
struct DenseComplement {
  long long F = 0;
  std::vector<int> label;                      // (F+2)^2 cells, -1 = kept
  int components = 0;                          // component 0 = outside
  std::vector<std::vector<std::array<long long, 2>>> cells;  // per component
};

DenseComplement dense_complement(const CarpetApprox& c) {
  DenseComplement d;
  const int N = c.base;
  d.F = ipow_checked(N, c.depth + 1);
  const long long side = d.F + 2;  // one pad cell all around
  const LevelMask& kept = c.star_kept.back();
  std::set<std::pair<long long, long long>> trimmed;
  for (const auto& b : c.star_trimmed.back()) trimmed.insert({b.i, b.j});

  auto complement = [&](long long x, long long y) {
    if (x < 0 || y < 0 || x >= d.F || y >= d.F) return true;  // pad = outside
    if (trimmed.count({x, y})) return true;
    return !kept.test(x / N, y / N);
  };

  d.label.assign((std::size_t)(side * side), -1);
  auto idx = [&](long long x, long long y) {
    return (std::size_t)((y + 1) * side + (x + 1));
  };
  std::deque<std::array<long long, 2>> queue;
  for (long long y = -1; y <= d.F; ++y)
    for (long long x = -1; x <= d.F; ++x) {
      if (!complement(x, y) || d.label[idx(x, y)] >= 0) continue;
      int id = d.components++;
      d.cells.emplace_back();
      d.label[idx(x, y)] = id;
      queue.push_back({x, y});
      while (!queue.empty()) {
        auto [cx, cy] = queue.front();
        queue.pop_front();
        d.cells[(std::size_t)id].push_back({cx, cy});
        const long long nb[4][2] = {{cx + 1, cy}, {cx - 1, cy}, {cx, cy + 1}, {cx, cy - 1}};
        for (auto& [nx, ny] : nb) {
          if (nx < -1 || ny < -1 || nx > d.F || ny > d.F) continue;
          if (!complement(nx, ny) || d.label[idx(nx, ny)] >= 0) continue;
          d.label[idx(nx, ny)] = id;
          queue.push_back({nx, ny});
        }
      }
    }
  return d;
}

Rational oracle_gap(const DenseComplement& d, int a, int b) {
  long long best = -1;
  for (const auto& [ax, ay] : d.cells[(std::size_t)a])
    for (const auto& [bx, by] : d.cells[(std::size_t)b]) {
      long long gx = std::max((long long)0, std::llabs(ax - bx) - 1);
      long long gy = std::max((long long)0, std::llabs(ay - by) - 1);
      long long g = std::max(gx, gy);
      if (best < 0 || g < best) best = g;
    }
  return Rational(best, d.F);
}

}  // namespace

TEST_CASE("level masks store and enumerate boxes") {
  LevelMask m = make_mask(6, 2);
  CHECK(m.side == 36);
  CHECK(mask_count(m) == 0);
  m.set(3, 5);
  m.set(35, 0);
  CHECK(m.test(3, 5));
  CHECK_FALSE(m.test(4, 5));
  CHECK(mask_count(m) == 2);

  auto boxes = mask_boxes(m, 6);
  REQUIRE(boxes.size() == 2);
  auto back = mask_from_boxes(6, 2, boxes);
  CHECK(back.cells == m.cells);

  CHECK_THROWS_AS(mask_from_boxes(6, 1, {make_box(6, 2, 0, 0)}), error);
}

TEST_CASE("p = 1 dagger keeps every box at every level") {
  auto tree = RetentionTree::sample({6, 1.0, 3, 5, 12});
  auto seq = dagger_sequence(tree, 3, 2);
  CHECK(seq.root_good);
  CHECK(seq.goodness_levels == 3);  // truncated at the sampled floor
  REQUIRE(seq.levels.size() == 4);
  for (int n = 0; n <= 3; ++n) CHECK(seq.level_count[(std::size_t)n] == ipow_checked(6, 2 * n));
  for (int n = 0; n < 3; ++n) CHECK(seq.child_shortfall[(std::size_t)n].empty());
}

TEST_CASE("p = 1 star carpet has no trims and unit area") {
  auto tree = RetentionTree::sample({6, 1.0, 2, 5, 12});
  auto carpet = star_trim(dagger_sequence(tree, 2, 1));
  CHECK(carpet.root_good);
  for (const auto& lv : carpet.star_trimmed) CHECK(lv.empty());
  for (const auto& a : carpet.star_area) CHECK(a == Rational(1));
  CHECK(carpet.same_component_contacts == 0);

  auto set = track_components(carpet);
  REQUIRE(set.components.size() == 1);  // just the outside
  CHECK_FALSE(set.components[0].bounded);
  CHECK(set.pairs_per_level.back() == 0);
  auto rep = whyburn_report(set, carpet.root_good);
  CHECK_FALSE(rep.has_pairs);
  CHECK(rep.pass);
}

TEST_CASE("a sparse tree fails root goodness") {
  auto tree = RetentionTree::sample({6, 0.1, 2, 5, 12});
  auto seq = dagger_sequence(tree, 2, 1);
  CHECK_FALSE(seq.root_good);
  CHECK(seq.levels.empty());
  auto carpet = star_trim(seq);
  CHECK_FALSE(carpet.root_good);
  auto set = track_components(carpet);
  CHECK(set.components.empty());
}

TEST_CASE("star_trim rejects bases below six") {
  auto tree = RetentionTree::sample({3, 1.0, 2, 5, 12});
  CHECK_THROWS_AS(star_trim(dagger_sequence(tree, 2, 1)), error);
}

TEST_CASE("dagger validates depth against the sampled tree") {
  auto tree = RetentionTree::sample({6, 0.999, 2, 5, 12});
  CHECK_THROWS_AS(dagger_sequence(tree, 3, 1), error);
  CHECK_THROWS_AS(dagger_sequence(tree, -1, 1), error);
  CHECK_THROWS_AS(dagger_sequence(tree, 2, -1), error);
}

TEST_CASE("budget zero keeps exactly the retained skeleton") {
  auto tree = RetentionTree::sample({6, 0.9, 2, 77, 12});
  auto seq = dagger_sequence(tree, 2, 0);
  REQUIRE(seq.root_good);  // 0-good is vacuous, the root is surely retained
  for (int n = 0; n <= 2; ++n)
    CHECK(seq.level_count[(std::size_t)n] == retained_count(tree, n));
}

TEST_CASE("truncated goodness is never stricter than the full sweep") {
  // The same seed gives identical marks at every level regardless of the
  // sampled depth, so a depth-5 tree carries the full 2-good labels that the
  // depth-3 tree can only truncate.
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 12 && compared < 2; ++seed) {
    auto shallow = RetentionTree::sample({6, 0.995, 3, seed, 12});
    auto deep = RetentionTree::sample({6, 0.995, 5, seed, 12});
    auto trunc = dagger_sequence(shallow, 3, 2);
    auto full = dagger_sequence(deep, 3, 2);
    CHECK(trunc.goodness_levels == 3);
    CHECK(full.goodness_levels == 5);
    if (full.root_good) CHECK(trunc.root_good);
    if (!full.root_good || !trunc.root_good) continue;
    ++compared;
    for (int n = 0; n <= 3; ++n)
      for_each_mask_box(full.levels[(std::size_t)n], 6, [&](const BoxAddress& b) {
        CHECK(trunc.levels[(std::size_t)n].test(b.i, b.j));
      });
  }
  REQUIRE(compared >= 1);
}

TEST_CASE("gap bound times N^k stays at least one fifth") {
  for (int k = 0; k <= 3; ++k)
    for (int m = 0; m <= 5; ++m) {
      Rational scaled = component_gap_bound(6, k, m) * Rational(ipow_checked(6, k));
      CHECK(scaled >= Rational(1, 5));
    }
}

TEST_CASE("tracked components match a dense complement oracle") {
  int verified = 0;
  for (std::uint64_t seed = 0; seed < 30 && verified < 3; ++seed) {
    auto tree = RetentionTree::sample({6, 0.997, 2, seed, 12});
    auto carpet = star_trim(dagger_sequence(tree, 2, 2));
    if (!carpet.root_good) continue;
    auto set = track_components(carpet);
    auto oracle = dense_complement(carpet);
    if (oracle.components <= 1) continue;  // nothing removed, nothing to compare
    ++verified;

    REQUIRE(set.gaps_complete);
    CHECK((int)set.components.size() == oracle.components);

    // Bounded components match as multisets of (cell count, diameter).
    std::multiset<std::pair<long long, std::string>> got, want;
    for (const auto& c : set.components)
      if (c.bounded) got.insert({c.final_cells, c.diameter.str()});
    for (int id = 1; id < oracle.components; ++id) {
      const auto& cs = oracle.cells[(std::size_t)id];
      long long x0 = cs[0][0], x1 = x0, y0 = cs[0][1], y1 = y0;
      for (const auto& [x, y] : cs) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
      want.insert({(long long)cs.size(),
                   Rational(std::max(x1 - x0, y1 - y0) + 1, oracle.F).str()});
    }
    CHECK(got == want);

    // Every pairwise gap agrees as a multiset (ids need not line up).
    std::multiset<std::string> got_gaps, want_gaps;
    for (const auto& g : set.gaps) got_gaps.insert(g.gap.str());
    for (int a = 0; a < oracle.components; ++a)
      for (int b = a + 1; b < oracle.components; ++b)
        want_gaps.insert(oracle_gap(oracle, a, b).str());
    CHECK(got_gaps == want_gaps);
    CHECK(set.pairs_per_level.back() ==
          (std::uint64_t)oracle.components * (oracle.components - 1) / 2);
    CHECK(set.min_gap_exact.back() == 1);
  }
  REQUIRE(verified >= 1);
}

TEST_CASE("whyburn report aggregates the tracked set") {
  int seen = 0;
  for (std::uint64_t seed = 0; seed < 30 && seen < 2; ++seed) {
    auto tree = RetentionTree::sample({6, 0.999, 3, seed, 12});
    auto carpet = star_trim(dagger_sequence(tree, 3, 2));
    if (!carpet.root_good) continue;
    auto set = track_components(carpet);
    auto rep = whyburn_report(set, carpet.root_good);
    if (!rep.has_pairs) continue;
    ++seen;
    CHECK(rep.min_gap > Rational(0));
    CHECK(rep.area_nonincreasing);
    CHECK(rep.diameters_nonincreasing);
    CHECK(rep.pass);
    // Scaled by birth level, every certified gap clears the 1/5 floor.
    for (std::size_t k = 0; k < set.min_scaled_gap_per_level.size(); ++k)
      if (set.pairs_per_level[k] > 0)
        CHECK(set.min_scaled_gap_per_level[k] >= Rational(1, 5));
  }
  REQUIRE(seen >= 1);
}

TEST_CASE("carpet JSON round trip preserves masks, trims, and areas") {
  auto tree = RetentionTree::sample({6, 0.999, 2, 3, 12});
  auto carpet = star_trim(dagger_sequence(tree, 2, 2));
  REQUIRE(carpet.root_good);

  auto j = carpet_to_json(carpet);
  auto back = carpet_from_json(j);
  CHECK(back.base == carpet.base);
  CHECK(back.depth == carpet.depth);
  CHECK(back.budget == carpet.budget);
  CHECK(back.kept_count == carpet.kept_count);
  REQUIRE(back.star_kept.size() == carpet.star_kept.size());
  for (std::size_t n = 0; n < carpet.star_kept.size(); ++n) {
    CHECK(back.dagger[n].cells == carpet.dagger[n].cells);
    CHECK(back.star_kept[n].cells == carpet.star_kept[n].cells);
  }
  for (std::size_t n = 0; n < carpet.star_area.size(); ++n) {
    CHECK(back.star_area[n] == carpet.star_area[n]);
    CHECK(back.star_trimmed[n] == carpet.star_trimmed[n]);
  }
}

TEST_CASE("capped carpet JSON keeps counts while trimming box lists") {
  auto tree = RetentionTree::sample({6, 0.999, 2, 3, 12});
  auto carpet = star_trim(dagger_sequence(tree, 2, 2));
  REQUIRE(carpet.root_good);

  auto j = carpet_to_json(carpet, 2);  // levels 0 and 1 only
  CHECK(j["dagger"].size() == 2);
  CHECK(j["star_kept"].size() == 2);
  CHECK(j["kept_count"].size() == carpet.kept_count.size());
  CHECK(j["star_area"].size() == carpet.star_area.size());

  auto back = carpet_from_json(j);
  CHECK(back.kept_count == carpet.kept_count);  // counts survive the cap
  CHECK(back.star_kept.size() == 2);
  CHECK(back.star_kept[1].cells == carpet.star_kept[1].cells);
}

TEST_CASE("cluster carpet cuts outermost fillings out of the big component") {
  int seen = 0;
  for (std::uint64_t seed = 0; seed < 40 && seen < 2; ++seed) {
    auto tree = RetentionTree::sample({3, 0.7, 3, seed, 12});
    auto rem = removed_boxes(tree, 3);
    if (rem.empty()) continue;
    auto cs = clusters(rem, AdjacencyRule::edge_adjacency, 3);
    auto cc = cluster_carpet(cs, 3, 3);
    if (!cc.event_e) continue;
    ++seen;

    CHECK(cc.carpet_area <= cc.u_area);
    CHECK(cc.u_area > Rational(0));
    // Carpet cells are a subset of U's cells.
    for (std::size_t i = 0; i < cc.carpet_cells.size(); ++i)
      if (cc.carpet_cells[i]) CHECK(cc.u_cells[i]);
    // Outermost clusters live inside U; boundary clusters never do.
    std::set<int> in_u(cc.clusters_in_u.begin(), cc.clusters_in_u.end());
    for (int c : cc.outermost) CHECK(in_u.count(c));
    for (int c : cc.boundary_clusters) CHECK_FALSE(in_u.count(c));
    // Exact area accounting against the raster.
    long long kept = 0;
    for (auto v : cc.carpet_cells) kept += v;
    CHECK(cc.carpet_area == Rational(kept, cc.side) / Rational(cc.side));
  }
  REQUIRE(seen >= 1);
}

TEST_CASE("cluster carpet respects the raster budget") {
  auto tree = RetentionTree::sample({3, 0.7, 3, 1, 12});
  auto cs = clusters(removed_boxes(tree, 3), AdjacencyRule::edge_adjacency, 3);
  CHECK_THROWS_AS(cluster_carpet(cs, 3, 3, 100), error);
}
