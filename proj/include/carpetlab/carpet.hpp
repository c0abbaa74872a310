#pragma once
#include <algorithm>
#include <cmath>
#include <array>
#include <cstdint>
#include <deque>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "carpetlab/boxlattice.hpp"
#include "carpetlab/error.hpp"
#include "carpetlab/percolation.hpp"
#include "carpetlab/rational.hpp"

namespace carpetlab {


// ---------------------------------------------------------------------------
// Per-level occupancy masks. Deep levels hold tens of millions of boxes, so
// box sets are stored as one byte per grid cell instead of address vectors;
// helpers convert to BoxAddress lists where a sparse view is wanted.
// ---------------------------------------------------------------------------

struct LevelMask {
  int level = 0;
  long long side = 1;
  std::vector<std::uint8_t> cells;  // row-major, x fastest
  bool test(long long i, long long j) const {
    return cells[(std::size_t)(j * side + i)] != 0;
  }
  void set(long long i, long long j) { cells[(std::size_t)(j * side + i)] = 1; }
};

inline LevelMask make_mask(int base, int level) {
  LevelMask m;
  m.level = level;
  m.side = ipow_checked(base, level);
  m.cells.assign((std::size_t)(m.side * m.side), 0);
  return m;
}

template <class Fn>
inline void for_each_mask_box(const LevelMask& m, int base, Fn&& fn) {
  for (long long j = 0; j < m.side; ++j)
    for (long long i = 0; i < m.side; ++i)
      if (m.cells[(std::size_t)(j * m.side + i)]) fn(BoxAddress{base, m.level, i, j});
}

inline long long mask_count(const LevelMask& m) {
  long long n = 0;
  for (std::uint8_t c : m.cells) n += c != 0;
  return n;
}

inline std::vector<BoxAddress> mask_boxes(const LevelMask& m, int base) {
  std::vector<BoxAddress> out;
  for_each_mask_box(m, base, [&](const BoxAddress& b) { out.push_back(b); });
  return out;
}

inline LevelMask mask_from_boxes(int base, int level, const std::vector<BoxAddress>& boxes) {
  LevelMask m = make_mask(base, level);
  for (const auto& b : boxes) {
    if (b.level != level || b.i < 0 || b.j < 0 || b.i >= m.side || b.j >= m.side)
      fail_validation("out-of-range", "box outside its level grid");
    m.set(b.i, b.j);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Dagger sequence. A_0+ is the root when the root is (budget)-good; A_n+ keeps
// the level-n boxes that are retained, (budget)-good, and children of A_(n-1)+
// boxes. The budget stands in for the infinite goodness limit, so it is
// carried in the result and echoed by every report built on top.
// ---------------------------------------------------------------------------

struct DaggerSequence {
  int base = 2;
  int budget = 0;
  int depth = 0;
  int goodness_levels = 0;  // deepest level the sweep looked at
  bool root_good = false;
  std::vector<LevelMask> levels;      // [n] = A_n+ occupancy; empty if !root_good
  std::vector<long long> level_count; // boxes per dagger level
  // Boxes of A_n+ with fewer than N^2-1 children in A_(n+1)+. The recursion
  // certifies N^2-1 children that are retained and (budget-1)-good; asking for
  // (budget)-good children is stricter, and near the sampled floor the labels
  // are truncated, so a shortfall is reported instead of silently asserted.
  std::vector<std::vector<BoxAddress>> child_shortfall;  // [n], n < depth
};

namespace detail {

// Dense per-level goodness tables: good[l] holds, for every level-l box, the
// current m-goodness byte as the recursion sweeps m upward. Level layout is
// row-major with x fastest: idx = j * side + i.
struct LevelBitmaps {
  int base = 0;
  int levels = 0;                               // deepest materialized level
  std::vector<std::vector<std::uint8_t>> mark;  // [l], l = 0..levels
  std::vector<std::vector<std::uint8_t>> good;  // [l], m-good after the sweep
};

// Materializes marks for levels 0..L and sweeps m = 1..budget upward. After
// the call good[l] holds min(budget, L-l)-goodness: full (budget)-goodness for
// every l <= L - budget, truncated labels below that, and the bare 0-good
// (vacuous) byte at the floor l = L.
inline LevelBitmaps goodness_sweep(const RetentionTree& tree, int L, int budget,
                                   std::size_t dense_budget = (std::size_t)1 << 31) {
  const int N = tree.config().base;
  LevelBitmaps bm;
  bm.base = N;
  bm.levels = L;
  double total = 0;
  for (int l = 0; l <= L; ++l) total += std::pow((double)N, 2.0 * l);
  if (total > (double)dense_budget)
    fail_budget("enumeration-budget-exceeded",
                "dense goodness sweep needs ~" + std::to_string((long long)total) + " boxes");

  bm.mark.resize((std::size_t)L + 1);
  bm.good.resize((std::size_t)L + 1);
  for (int l = 0; l <= L; ++l) {
    long long side = ipow_checked(N, l);
    auto& m = bm.mark[(std::size_t)l];
    m.assign((std::size_t)(side * side), 1);
    if (l > 0)
      for (long long j = 0; j < side; ++j)
        for (long long i = 0; i < side; ++i)
          m[(std::size_t)(j * side + i)] = tree.mark(BoxAddress{N, l, i, j}) ? 1 : 0;
    // 0-good is vacuous; sweeps below overwrite every level they can certify.
    bm.good[(std::size_t)l] = m;
    if (budget > 0) bm.good[(std::size_t)l].assign(bm.good[(std::size_t)l].size(), 1);
  }
  if (budget == 0) return bm;

  // Sweep m upward; level l is rewritten from (mark & good) of level l+1, top
  // level first so the children still hold the (m-1) values when read.
  for (int m = 1; m <= budget; ++m) {
    for (int l = 0; l <= L - m; ++l) {
      long long side = ipow_checked(N, l), cside = side * N;
      auto& g = bm.good[(std::size_t)l];
      const auto& cg = bm.good[(std::size_t)(l + 1)];
      const auto& cm = bm.mark[(std::size_t)(l + 1)];
      for (long long j = 0; j < side; ++j)
        for (long long i = 0; i < side; ++i) {
          int fails = 0;
          for (int r = 0; r < N && fails < 2; ++r)
            for (int c = 0; c < N && fails < 2; ++c) {
              std::size_t ci = (std::size_t)((j * N + r) * cside + (i * N + c));
              if (!(cm[ci] && cg[ci])) ++fails;
            }
          g[(std::size_t)(j * side + i)] = fails <= 1;
        }
    }
  }
  return bm;
}

}  // namespace detail

inline DaggerSequence dagger_sequence(const RetentionTree& tree, int depth, int budget) {
  if (depth < 0) fail_validation("out-of-range", "negative carpet depth");
  if (budget < 0) fail_validation("out-of-range", "negative goodness budget");
  if (depth > tree.config().depth)
    fail_validation("depth-exceeded", "carpet depth exceeds sampled tree depth");
  const int N = tree.config().base;
  DaggerSequence seq;
  seq.base = N;
  seq.budget = budget;
  seq.depth = depth;

  // The sweep stops at the sampled floor: levels within `budget` of it carry
  // truncated goodness labels, and the shortfall scan below reports where
  // that thins the recursion instead of pretending full certification.
  const int L = std::min(tree.config().depth, depth + budget);
  seq.goodness_levels = L;
  if (L == 0) {
    seq.root_good = true;
    seq.levels.push_back(make_mask(N, 0));
    seq.levels[0].set(0, 0);
    seq.level_count.push_back(1);
    return seq;
  }
  auto bm = detail::goodness_sweep(tree, L, budget);
  seq.root_good = bm.good[0][0] != 0;
  if (!seq.root_good) return seq;

  seq.levels.resize((std::size_t)depth + 1);
  seq.level_count.assign((std::size_t)depth + 1, 0);
  seq.levels[0] = make_mask(N, 0);
  seq.levels[0].set(0, 0);
  seq.level_count[0] = 1;
  for (int n = 1; n <= depth; ++n) {
    long long side = ipow_checked(N, n), pside = side / N;
    LevelMask dag = make_mask(N, n);
    const auto& m = bm.mark[(std::size_t)n];
    const auto& g = bm.good[(std::size_t)n];
    const auto& prev = seq.levels[(std::size_t)n - 1].cells;
    long long count = 0;
    for (long long j = 0; j < side; ++j)
      for (long long i = 0; i < side; ++i) {
        std::size_t idx = (std::size_t)(j * side + i);
        if (m[idx] && g[idx] && prev[(std::size_t)((j / N) * pside + (i / N))]) {
          dag.cells[idx] = 1;
          ++count;
        }
      }
    seq.levels[(std::size_t)n] = std::move(dag);
    seq.level_count[(std::size_t)n] = count;
  }
  // Child-shortfall scan: parents with two or more children missing from the
  // next dagger level.
  seq.child_shortfall.resize((std::size_t)depth);
  for (int n = 0; n < depth; ++n) {
    const LevelMask& cur = seq.levels[(std::size_t)n];
    const LevelMask& next = seq.levels[(std::size_t)n + 1];
    for_each_mask_box(cur, N, [&](const BoxAddress& b) {
      int missing = 0;
      for (int r = 0; r < N; ++r)
        for (int c = 0; c < N; ++c)
          if (!next.test(b.i * N + c, b.j * N + r)) ++missing;
      if (missing >= 2) seq.child_shortfall[(std::size_t)n].push_back(b);
    });
  }
  return seq;
}

inline std::vector<BoxAddress> dagger_boxes(const DaggerSequence& seq, int level) {
  if (level < 0 || level >= (int)seq.levels.size())
    fail_validation("out-of-range", "dagger level outside the built range");
  return mask_boxes(seq.levels[(std::size_t)level], seq.base);
}

// ---------------------------------------------------------------------------
// Star sequence. Stage n works on X_n = A_(n-1)* intersected with A_n+, finds
// every lattice vertex where the closures of two distinct complement
// components meet (necessarily a lone point: a shared segment would have
// merged them in the flood fill), and removes the other two level-(n+1) boxes
// at that vertex. The removal opens a channel that joins the touching pair, so
// the surviving components have pairwise disjoint closures.
// ---------------------------------------------------------------------------

struct TrimEvent {
  int stage = 0;       // contact found while building A_stage*
  Rational x, y;       // the shared corner
  std::array<BoxAddress, 2> trimmed;  // level-(stage+1) boxes removed
};

struct CarpetApprox {
  int base = 2;
  int budget = 0;
  int depth = 0;
  bool root_good = false;
  std::vector<LevelMask> dagger;              // A_n+ occupancy
  std::vector<LevelMask> star_kept;           // level-n boxes of A_n*
  std::vector<long long> kept_count;          // per star level
  std::vector<std::vector<BoxAddress>> star_trimmed;  // [n] = boxes cut at stage n (level n+1)
  std::vector<TrimEvent> trim_log;
  std::vector<Rational> star_area;            // exact area(A_n*)
  int same_component_contacts = 0;  // corner pinches of a component with itself
};

inline std::vector<BoxAddress> star_boxes(const CarpetApprox& ca, int level) {
  if (level < 0 || level >= (int)ca.star_kept.size())
    fail_validation("out-of-range", "star level outside the built range");
  return mask_boxes(ca.star_kept[(std::size_t)level], ca.base);
}

inline CarpetApprox star_trim(const DaggerSequence& dagger) {
  const int N = dagger.base;
  if (N < 6)
    fail_validation("unsupported-base",
                    "corner trimming requires base >= 6 (pass to a coarser grid by squaring "
                    "the base if a smaller one is needed)");
  CarpetApprox ca;
  ca.base = N;
  ca.budget = dagger.budget;
  ca.depth = dagger.depth;
  ca.root_good = dagger.root_good;
  ca.dagger = dagger.levels;
  if (!dagger.root_good) return ca;

  ca.star_kept.resize((std::size_t)dagger.depth + 1);
  ca.star_trimmed.resize((std::size_t)dagger.depth + 1);
  ca.star_area.resize((std::size_t)dagger.depth + 1);
  ca.kept_count.assign((std::size_t)dagger.depth + 1, 0);
  ca.star_kept[0] = make_mask(N, 0);
  ca.star_kept[0].set(0, 0);
  ca.kept_count[0] = 1;
  ca.star_area[0] = Rational(1);

  for (int n = 1; n <= dagger.depth; ++n) {
    long long side = ipow_checked(N, n), pside = side / N;
    if ((side + 2) * (side + 2) > (long long)1 << 26)
      fail_budget("enumeration-budget-exceeded", "star stage raster too large");
    // X_n: dagger level n, parent kept at stage n-1, not trimmed at stage n-1.
    LevelMask kept = make_mask(N, n);
    const auto& dag = ca.dagger[(std::size_t)n].cells;
    const auto& prev_cells = ca.star_kept[(std::size_t)n - 1].cells;
    long long count = 0;
    for (long long j = 0; j < side; ++j)
      for (long long i = 0; i < side; ++i) {
        std::size_t idx = (std::size_t)(j * side + i);
        if (dag[idx] && prev_cells[(std::size_t)((j / N) * pside + (i / N))]) {
          kept.cells[idx] = 1;
          ++count;
        }
      }
    for (const auto& t : ca.star_trimmed[(std::size_t)n - 1])
      if (kept.cells[(std::size_t)(t.j * side + t.i)]) {
        kept.cells[(std::size_t)(t.j * side + t.i)] = 0;
        --count;
      }
    ca.kept_count[(std::size_t)n] = count;

    // Complement components, one pad ring so the outside is a single label.
    const long long w = side + 2;
    std::vector<int> comp((std::size_t)(w * w), -1);
    auto kept_at = [&](long long x, long long y) {
      if (x < 0 || y < 0 || x >= side || y >= side) return false;
      return kept.cells[(std::size_t)(y * side + x)] != 0;
    };
    int next_label = 0;
    std::deque<std::pair<long long, long long>> queue;
    for (long long y = -1; y <= side; ++y)
      for (long long x = -1; x <= side; ++x) {
        if (kept_at(x, y) || comp[(std::size_t)((y + 1) * w + (x + 1))] >= 0) continue;
        int label = next_label++;
        comp[(std::size_t)((y + 1) * w + (x + 1))] = label;
        queue.emplace_back(x, y);
        while (!queue.empty()) {
          auto [cx, cy] = queue.front();
          queue.pop_front();
          const long long nb[4][2] = {{cx + 1, cy}, {cx - 1, cy}, {cx, cy + 1}, {cx, cy - 1}};
          for (auto& [nx, ny] : nb) {
            if (nx < -1 || ny < -1 || nx > side || ny > side || kept_at(nx, ny)) continue;
            int& c = comp[(std::size_t)((ny + 1) * w + (nx + 1))];
            if (c >= 0) continue;
            c = label;
            queue.emplace_back(nx, ny);
          }
        }
      }
    auto comp_at = [&](long long x, long long y) {
      return comp[(std::size_t)((y + 1) * w + (x + 1))];
    };

    // Interior vertices: a contact needs both anti-diagonal cells occupied,
    // which never happens against the pad.
    long long scale_n1 = ipow_checked(N, n + 1);
    for (long long vy = 1; vy < side; ++vy)
      for (long long vx = 1; vx < side; ++vx) {
        bool sw = kept_at(vx - 1, vy - 1), se = kept_at(vx, vy - 1);
        bool nw = kept_at(vx - 1, vy), ne = kept_at(vx, vy);
        std::array<BoxAddress, 2> cut;
        int ca_id = -1, cb_id = -1;
        if (!sw && !ne && se && nw) {
          ca_id = comp_at(vx - 1, vy - 1);
          cb_id = comp_at(vx, vy);
          // corner sub-boxes of the occupied pair at the vertex
          cut = {BoxAddress{N, n + 1, vx * N, vy * N - 1},       // NW corner of SE cell
                 BoxAddress{N, n + 1, vx * N - 1, vy * N}};      // SE corner of NW cell
        } else if (!se && !nw && sw && ne) {
          ca_id = comp_at(vx, vy - 1);
          cb_id = comp_at(vx - 1, vy);
          cut = {BoxAddress{N, n + 1, vx * N - 1, vy * N - 1},   // NE corner of SW cell
                 BoxAddress{N, n + 1, vx * N, vy * N}};          // SW corner of NE cell
        } else {
          continue;
        }
        if (ca_id == cb_id) {
          ++ca.same_component_contacts;
          continue;
        }
        TrimEvent ev;
        ev.stage = n;
        ev.x = Rational(vx, side);
        ev.y = Rational(vy, side);
        ev.trimmed = cut;
        ca.trim_log.push_back(ev);
        ca.star_trimmed[(std::size_t)n].push_back(cut[0]);
        ca.star_trimmed[(std::size_t)n].push_back(cut[1]);
      }

    ca.star_area[(std::size_t)n] =
        Rational(count, side) / Rational(side) -
        Rational((long long)ca.star_trimmed[(std::size_t)n].size(), scale_n1) /
            Rational(scale_n1);
    ca.star_kept[(std::size_t)n] = std::move(kept);
  }
  return ca;
}

// ---------------------------------------------------------------------------
// Component tracking across levels. The complement of A_n* is exactly the
// union of the boxes dropped by the dagger/star recursion plus the trimmed
// corner channels, so components are tracked sparsely: every dropped or
// trimmed box becomes a rectangle on the finest grid, edge-adjacent
// rectangles are merged with a union-find, and four pad slabs around the unit
// square seed the outside. Nesting across levels is structural (classes only
// gain members); the checks that remain live are that no two established
// components are ever joined and that every pair keeps its certified gap.
// ---------------------------------------------------------------------------

struct TrackedComponent {
  int id = 0;
  int birth = 0;            // first level where the component exists
  bool bounded = true;      // false only for the outside region
  long long final_cells = 0;
  Rational diameter;        // L-inf diameter of the final-level cell union
};

struct GapRecord {
  int a = 0, b = 0;  // component ids, a < b
  int level = 0;     // measured on A_level*
  Rational gap;      // exact L-inf distance between closures
  Rational bound;    // N^-k (1 - 4 sum_{i<=m} N^-i - 2 N^-(m+1)), k = max birth
};

// The certified post-trim separation for a pair born at level k, seen m levels
// later.
inline Rational component_gap_bound(int base, int k, int m) {
  Rational sum(0);
  for (int i = 1; i <= m; ++i) {
    long long d = ipow_checked(base, i);
    sum = sum + Rational(4, d);
  }
  long long dm1 = ipow_checked(base, m + 1);
  Rational inner = Rational(1) - sum - Rational(2, dm1);
  long long dk = ipow_checked(base, k);
  return inner / Rational(dk);
}

struct ComponentSet {
  int base = 2, depth = 0, budget = 0;
  std::vector<TrackedComponent> components;  // id-indexed; id 0 is the outside
  // Every pair at every level >= max birth, while the per-level pair count
  // stays within the enumeration budget; `gaps_complete` says whether the
  // list really holds them all. Past the budget the pairs are still certified
  // (violations abort), but only the aggregates below are reported.
  std::vector<GapRecord> gaps;
  bool gaps_complete = true;
  std::vector<int> components_per_level;
  std::vector<std::uint64_t> pairs_per_level;
  std::vector<Rational> min_gap_per_level;         // exact min, or certified floor
  std::vector<std::uint8_t> min_gap_exact;         // 1 when the entry is the true min
  std::vector<Rational> min_scaled_gap_per_level;  // min of gap * N^(max birth)
  std::vector<std::uint8_t> min_scaled_exact;
  std::vector<Rational> star_area;                 // copied from the carpet
  int same_component_contacts = 0;
};

namespace detail {

struct CompRect {
  long long x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // finest-grid coordinates, x1 > x0
  bool synthetic = false;                    // pad slabs around the square
};

// L-inf distance between two closed rectangles; 0 when they touch.
inline long long rect_gap(const CompRect& a, const CompRect& b) {
  long long dx = std::max({(long long)0, b.x0 - a.x1, a.x0 - b.x1});
  long long dy = std::max({(long long)0, b.y0 - a.y1, a.y0 - b.y1});
  return std::max(dx, dy);
}

// Union-find over complement rectangles with per-class payload. Joining two
// classes that both carry an established component id is the merge the gap
// induction rules out, so it aborts.
struct RectForest {
  std::vector<int> parent;
  std::vector<CompRect> rects;
  std::vector<int> birth;                 // valid at roots
  std::vector<int> comp_id;               // valid at roots; -1 = not yet tracked
  std::vector<long long> cells;           // non-synthetic covered area
  std::vector<long long> bx0, by0, bx1, by1;
  std::vector<std::vector<int>> member;   // valid at roots

  int find(int a) {
    while (parent[(std::size_t)a] != a) {
      parent[(std::size_t)a] = parent[(std::size_t)parent[(std::size_t)a]];
      a = parent[(std::size_t)a];
    }
    return a;
  }

  int add(const CompRect& r, int stage) {
    int id = (int)rects.size();
    rects.push_back(r);
    parent.push_back(id);
    birth.push_back(stage);
    comp_id.push_back(-1);
    cells.push_back(r.synthetic ? 0 : (r.x1 - r.x0) * (r.y1 - r.y0));
    bx0.push_back(r.x0);
    by0.push_back(r.y0);
    bx1.push_back(r.x1);
    by1.push_back(r.y1);
    member.push_back({id});
    return id;
  }

  void unite(int a, int b, int stage) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    check(comp_id[(std::size_t)a] < 0 || comp_id[(std::size_t)b] < 0, "component-merge",
          "two tracked components joined at level " + std::to_string(stage));
    if (member[(std::size_t)a].size() < member[(std::size_t)b].size()) std::swap(a, b);
    parent[(std::size_t)b] = a;
    birth[(std::size_t)a] = std::min(birth[(std::size_t)a], birth[(std::size_t)b]);
    comp_id[(std::size_t)a] = std::max(comp_id[(std::size_t)a], comp_id[(std::size_t)b]);
    cells[(std::size_t)a] += cells[(std::size_t)b];
    bx0[(std::size_t)a] = std::min(bx0[(std::size_t)a], bx0[(std::size_t)b]);
    by0[(std::size_t)a] = std::min(by0[(std::size_t)a], by0[(std::size_t)b]);
    bx1[(std::size_t)a] = std::max(bx1[(std::size_t)a], bx1[(std::size_t)b]);
    by1[(std::size_t)a] = std::max(by1[(std::size_t)a], by1[(std::size_t)b]);
    auto& ma = member[(std::size_t)a];
    auto& mb = member[(std::size_t)b];
    ma.insert(ma.end(), mb.begin(), mb.end());
    mb.clear();
    mb.shrink_to_fit();
  }

  // Exact L-inf distance between the rect unions of two roots.
  long long class_gap(int a, int b) const {
    const auto& ma = member[(std::size_t)a];
    const auto& mb = member[(std::size_t)b];
    if ((std::uint64_t)ma.size() * (std::uint64_t)mb.size() > (std::uint64_t)50000000)
      fail_budget("enumeration-budget-exceeded", "component pair too fragmented to compare");
    long long best = -1;
    for (int ra : ma)
      for (int rb : mb) {
        long long d = rect_gap(rects[(std::size_t)ra], rects[(std::size_t)rb]);
        if (best < 0 || d < best) best = d;
      }
    check(best >= 0, "empty-region", "gap requested between empty components");
    return best;
  }
};

// Rect edges bucketed by their grid line, for O(1) discovery of the existing
// rects a new one touches along a positive-length segment.
struct EdgeIndex {
  // key: the shared line coordinate; entries: (span lo, span hi, rect index)
  std::unordered_map<long long, std::vector<std::array<long long, 3>>> right_at, left_at,
      top_at, bottom_at;

  void insert(int idx, const CompRect& r) {
    left_at[r.x0].push_back({r.y0, r.y1, (long long)idx});
    right_at[r.x1].push_back({r.y0, r.y1, (long long)idx});
    bottom_at[r.y0].push_back({r.x0, r.x1, (long long)idx});
    top_at[r.y1].push_back({r.x0, r.x1, (long long)idx});
  }

  template <class Fn>
  void neighbors(const CompRect& r, Fn&& fn) const {
    auto scan = [&](const std::unordered_map<long long, std::vector<std::array<long long, 3>>>& m,
                    long long key, long long lo, long long hi) {
      auto it = m.find(key);
      if (it == m.end()) return;
      for (const auto& e : it->second)
        if (std::min(hi, e[1]) > std::max(lo, e[0])) fn((int)e[2]);
    };
    scan(right_at, r.x0, r.y0, r.y1);   // their right edge on our left line
    scan(left_at, r.x1, r.y0, r.y1);
    scan(top_at, r.y0, r.x0, r.x1);
    scan(bottom_at, r.y1, r.x0, r.x1);
  }
};

inline long long floor_div(long long a, long long s) {
  return a >= 0 ? a / s : -((-a + s - 1) / s);
}

}  // namespace detail

inline ComponentSet track_components(const CarpetApprox& carpet,
                                     std::uint64_t full_pair_budget = 20000) {
  const int N = carpet.base;
  ComponentSet set;
  set.base = N;
  set.depth = carpet.depth;
  set.budget = carpet.budget;
  set.star_area = carpet.star_area;
  set.same_component_contacts = carpet.same_component_contacts;
  if (!carpet.root_good) return set;

  const int fine_exp = carpet.depth + 1;
  const long long F = ipow_checked(N, fine_exp);  // finest grid side

  detail::RectForest uf;
  detail::EdgeIndex edges;
  // Outside: four overlapping pad slabs around the unit square, one class.
  {
    detail::CompRect pads[4] = {{-1, -1, 0, F + 1, true},
                                {F, -1, F + 1, F + 1, true},
                                {-1, -1, F + 1, 0, true},
                                {-1, F, F + 1, F + 1, true}};
    int first = -1;
    for (const auto& p : pads) {
      int idx = uf.add(p, 0);
      edges.insert(idx, p);
      if (first < 0)
        first = idx;
      else
        uf.unite(first, idx, 0);
    }
    uf.comp_id[(std::size_t)uf.find(first)] = 0;
    set.components.push_back(TrackedComponent{0, 0, false, 0, Rational(0)});
  }

  for (int n = 0; n <= carpet.depth; ++n) {
    std::size_t stage_first = uf.rects.size();
    if (n >= 1) {
      // Dropped boxes: children of stage-(n-1) kept boxes missing from the
      // stage-n mask. Stage-(n-1) trims also satisfy that test but joined the
      // complement last stage, so they are skipped here.
      const LevelMask& pk = carpet.star_kept[(std::size_t)n - 1];
      const LevelMask& ck = carpet.star_kept[(std::size_t)n];
      std::unordered_set<long long> old_trims;
      for (const auto& t : carpet.star_trimmed[(std::size_t)n - 1])
        old_trims.insert(t.j * ck.side + t.i);
      const long long unit = ipow_checked(N, fine_exp - n);
      for (long long pj = 0; pj < pk.side; ++pj)
        for (long long pi = 0; pi < pk.side; ++pi) {
          if (!pk.cells[(std::size_t)(pj * pk.side + pi)]) continue;
          for (int r = 0; r < N; ++r)
            for (int c = 0; c < N; ++c) {
              long long ci = pi * N + c, cj = pj * N + r;
              if (ck.cells[(std::size_t)(cj * ck.side + ci)]) continue;
              if (!old_trims.empty() && old_trims.count(cj * ck.side + ci)) continue;
              detail::CompRect rect{ci * unit, cj * unit, (ci + 1) * unit, (cj + 1) * unit,
                                    false};
              int idx = uf.add(rect, n);
              edges.neighbors(rect, [&](int other) { uf.unite(idx, other, n); });
              edges.insert(idx, rect);
            }
        }
      // Stage-n trims: corner channels, part of A_n* by construction. Each
      // joins the two regions whose closures met at the vertex.
      const long long cunit = ipow_checked(N, fine_exp - n - 1);
      for (const auto& t : carpet.star_trimmed[(std::size_t)n]) {
        detail::CompRect rect{t.i * cunit, t.j * cunit, (t.i + 1) * cunit, (t.j + 1) * cunit,
                              false};
        int idx = uf.add(rect, n);
        edges.neighbors(rect, [&](int other) { uf.unite(idx, other, n); });
        edges.insert(idx, rect);
      }
    }
    // Fresh classes become tracked components, in insertion order.
    for (std::size_t r = stage_first; r < uf.rects.size(); ++r) {
      int root = uf.find((int)r);
      if (uf.comp_id[(std::size_t)root] >= 0) continue;
      int id = (int)set.components.size();
      uf.comp_id[(std::size_t)root] = id;
      set.components.push_back(
          TrackedComponent{id, uf.birth[(std::size_t)root], true, 0, Rational(0)});
    }

    // Distinct classes at this stage.
    std::vector<int> roots;
    {
      std::unordered_set<int> seen;
      for (std::size_t r = 0; r < uf.rects.size(); ++r) {
        int root = uf.find((int)r);
        if (seen.insert(root).second) roots.push_back(root);
      }
    }
    set.components_per_level.push_back((int)roots.size());
    std::uint64_t pairs = (std::uint64_t)roots.size() * (roots.size() - 1) / 2;
    set.pairs_per_level.push_back(pairs);

    // Gap certification. Small stages enumerate every pair exactly; larger
    // ones certify through distance buckets: a pair is only measured when two
    // member rects fall within the bound for its birth class, and every
    // unmeasured pair is therefore at least that bound apart.
    Rational min_gap(1), min_scaled(1);
    bool have_pair_value = false;
    auto measure = [&](int ra, int rb, bool record) {
      int ia = uf.comp_id[(std::size_t)ra], ib = uf.comp_id[(std::size_t)rb];
      int k = std::max(uf.birth[(std::size_t)ra], uf.birth[(std::size_t)rb]);
      long long units = uf.class_gap(ra, rb);
      Rational gap(units, F);
      Rational bound = component_gap_bound(N, k, n - k);
      check(gap >= bound, "gap-induction-violated",
            "component pair closer than the certified bound at level " + std::to_string(n));
      Rational scaled = gap * Rational(ipow_checked(N, k));
      if (!have_pair_value || gap < min_gap) min_gap = gap;
      if (!have_pair_value || scaled < min_scaled) min_scaled = scaled;
      have_pair_value = true;
      if (record) {
        GapRecord rec;
        rec.a = std::min(ia, ib);
        rec.b = std::max(ia, ib);
        rec.level = n;
        rec.gap = gap;
        rec.bound = bound;
        set.gaps.push_back(rec);
      }
    };
    if (set.gaps_complete && pairs <= full_pair_budget) {
      std::vector<int> order = roots;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return uf.comp_id[(std::size_t)a] < uf.comp_id[(std::size_t)b];
      });
      for (std::size_t a = 0; a < order.size(); ++a)
        for (std::size_t b = a + 1; b < order.size(); ++b) measure(order[a], order[b], true);
      if (have_pair_value) {
        set.min_gap_per_level.push_back(min_gap);
        set.min_scaled_gap_per_level.push_back(min_scaled);
      } else {
        set.min_gap_per_level.push_back(Rational(1));
        set.min_scaled_gap_per_level.push_back(Rational(1));
      }
      set.min_gap_exact.push_back(1);
      set.min_scaled_exact.push_back(1);
    } else {
      set.gaps_complete = false;
      Rational floor_gap(1), floor_scaled(0);
      bool have_floor = false;
      std::unordered_set<std::uint64_t> measured;
      for (int b = 1; b <= n; ++b) {
        Rational bound = component_gap_bound(N, b, n - b);
        long long r_int = (bound.num * F + bound.den - 1) / bound.den;  // ceil(bound * F)
        if (r_int < 1) r_int = 1;
        Rational class_floor(r_int, F);
        Rational class_floor_scaled = class_floor * Rational(ipow_checked(N, b));
        if (!have_floor || class_floor < floor_gap) floor_gap = class_floor;
        if (!have_floor || class_floor_scaled < floor_scaled)
          floor_scaled = class_floor_scaled;
        have_floor = true;
        const long long s = r_int;
        const long long enc = 4000037;  // bucket coords stay far below this
        auto key_of = [&](long long bx, long long by) {
          return (bx + 1000000) * enc + (by + 1000000);
        };
        std::unordered_map<long long, std::vector<int>> buckets;
        for (std::size_t r = 0; r < uf.rects.size(); ++r) {
          int root = uf.find((int)r);
          if (uf.birth[(std::size_t)root] > b) continue;
          const auto& rc = uf.rects[r];
          long long lo_x = detail::floor_div(rc.x0, s), hi_x = detail::floor_div(rc.x1, s);
          long long lo_y = detail::floor_div(rc.y0, s), hi_y = detail::floor_div(rc.y1, s);
          for (long long by = lo_y; by <= hi_y; ++by)
            for (long long bx = lo_x; bx <= hi_x; ++bx) {
              // only the perimeter ring: interior buckets cannot see outside
              if (bx != lo_x && bx != hi_x && by != lo_y && by != hi_y) continue;
              buckets[key_of(bx, by)].push_back((int)r);
            }
        }
        auto consider = [&](int r1, int r2) {
          int ra = uf.find(r1), rb = uf.find(r2);
          if (ra == rb) return;
          if (std::max(uf.birth[(std::size_t)ra], uf.birth[(std::size_t)rb]) != b) return;
          std::uint64_t pk = (std::uint64_t)std::min(ra, rb) << 32 | (std::uint32_t)std::max(ra, rb);
          if (!measured.insert(pk).second) return;
          measure(ra, rb, false);
        };
        for (const auto& [key, list] : buckets) {
          long long bx = key / enc - 1000000, by = key % enc - 1000000;
          for (std::size_t i = 0; i < list.size(); ++i)
            for (std::size_t j = i + 1; j < list.size(); ++j) consider(list[i], list[j]);
          const long long off[4][2] = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
          for (const auto& o : off) {
            auto it = buckets.find(key_of(bx + o[0], by + o[1]));
            if (it == buckets.end()) continue;
            for (int r1 : list)
              for (int r2 : it->second) consider(r1, r2);
          }
        }
      }
      // Reported minima: exact when a measured pair undercuts every
      // unmeasured pair's certified floor, otherwise the floor itself.
      if (have_pair_value && min_gap <= floor_gap) {
        set.min_gap_per_level.push_back(min_gap);
        set.min_gap_exact.push_back(1);
      } else {
        set.min_gap_per_level.push_back(floor_gap);
        set.min_gap_exact.push_back(0);
      }
      if (have_pair_value && min_scaled <= floor_scaled) {
        set.min_scaled_gap_per_level.push_back(min_scaled);
        set.min_scaled_exact.push_back(1);
      } else {
        set.min_scaled_gap_per_level.push_back(floor_scaled);
        set.min_scaled_exact.push_back(0);
      }
    }

    // Final-level geometry per component.
    if (n == carpet.depth) {
      for (int root : roots) {
        auto& comp = set.components[(std::size_t)uf.comp_id[(std::size_t)root]];
        comp.final_cells = uf.cells[(std::size_t)root];
        if (comp.bounded)
          comp.diameter = Rational(
              std::max(uf.bx1[(std::size_t)root] - uf.bx0[(std::size_t)root],
                       uf.by1[(std::size_t)root] - uf.by0[(std::size_t)root]),
              F);
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Finite-depth Whyburn validation: positive pairwise gaps, per-birth-level
// diameters nonincreasing, and the interior-area decay proxy. The limit
// statement (empty interior) is not decidable here and is labeled a proxy.
// ---------------------------------------------------------------------------

struct WhyburnReport {
  int base = 2, depth = 0, budget = 0;
  bool root_good = false;
  bool has_pairs = false;
  Rational min_gap;       // over final-level pairs
  bool min_gap_exact = true;  // false when only the certified floor is known
  std::vector<std::pair<int, Rational>> max_diameter_per_birth;  // bounded components
  bool diameters_nonincreasing = true;
  std::vector<Rational> star_area;
  std::vector<double> area_ratio;  // area_n / area_(n-1)
  bool area_nonincreasing = true;
  int same_component_contacts = 0;
  bool pass = false;
};

inline WhyburnReport whyburn_report(const ComponentSet& set, bool root_good = true) {
  WhyburnReport rep;
  rep.base = set.base;
  rep.depth = set.depth;
  rep.budget = set.budget;
  rep.root_good = root_good;
  rep.star_area = set.star_area;
  rep.same_component_contacts = set.same_component_contacts;
  for (std::size_t n = 1; n < set.star_area.size(); ++n) {
    if (set.star_area[n] > set.star_area[n - 1]) rep.area_nonincreasing = false;
    double prev = (double)set.star_area[n - 1].num / (double)set.star_area[n - 1].den;
    double cur = (double)set.star_area[n].num / (double)set.star_area[n].den;
    rep.area_ratio.push_back(prev > 0 ? cur / prev : 0.0);
  }
  if (!set.pairs_per_level.empty() && set.pairs_per_level.back() > 0) {
    rep.has_pairs = true;
    rep.min_gap = set.min_gap_per_level.back();
    rep.min_gap_exact = set.min_gap_exact.back() != 0;
  }
  std::unordered_map<int, Rational> per_birth;
  for (const auto& c : set.components) {
    if (!c.bounded) continue;
    auto [it, fresh] = per_birth.try_emplace(c.birth, c.diameter);
    if (!fresh) it->second = rat_max(it->second, c.diameter);
  }
  std::vector<int> births;
  for (auto& [k, d] : per_birth) births.push_back(k);
  std::sort(births.begin(), births.end());
  for (int k : births) rep.max_diameter_per_birth.emplace_back(k, per_birth[k]);
  for (std::size_t i = 1; i < rep.max_diameter_per_birth.size(); ++i)
    if (rep.max_diameter_per_birth[i].second > rep.max_diameter_per_birth[i - 1].second)
      rep.diameters_nonincreasing = false;
  rep.pass = (!rep.has_pairs || rep.min_gap > Rational(0)) && rep.diameters_nonincreasing;
  return rep;
}

// ---------------------------------------------------------------------------
// Cluster carpet: union the boundary-touching removed-box clusters with the
// exterior, keep the largest interior component U of what is left, and cut
// the filling interiors of the outermost clusters inside U.
// ---------------------------------------------------------------------------

struct ClusterCarpet {
  bool event_e = false;
  int base = 2, level = 0;  // raster level
  long long side = 0;
  Rational u_area, carpet_area;
  std::vector<int> boundary_clusters;  // cluster ids fused with the exterior
  std::vector<int> clusters_in_u;
  std::vector<int> outermost;          // subset of clusters_in_u
  std::vector<std::uint8_t> u_cells;      // side*side, 1 = cell of U
  std::vector<std::uint8_t> carpet_cells; // side*side, 1 = kept by the carpet
  int touching_cluster_pairs = 0;      // distinct clusters whose closures meet
  int unresolved_corners = 0;          // contacts with no third-box witness
};

inline ClusterCarpet cluster_carpet(const ClusterSet& cs, int base, int depth,
                                    std::size_t raster_budget = (std::size_t)1 << 26) {
  ClusterCarpet out;
  out.base = base;
  out.level = depth;
  long long side = ipow_checked(base, depth);
  out.side = side;
  if ((std::uint64_t)side * (std::uint64_t)side > raster_budget)
    fail_budget("enumeration-budget-exceeded", "cluster carpet raster too large");

  std::unordered_set<int> touching;
  {
    std::unordered_set<long long> pair_seen;
    for (const auto& cc : cs.corner_contacts) {
      int ka = cs.cluster_of[(std::size_t)cc.a], kb = cs.cluster_of[(std::size_t)cc.b];
      if (!cc.has_third_box) ++out.unresolved_corners;
      if (ka == kb) continue;
      long long key = (long long)std::min(ka, kb) * (long long)(cs.members.size() + 1) +
                      std::max(ka, kb);
      if (pair_seen.insert(key).second) ++out.touching_cluster_pairs;
    }
  }

  // Rasterize cluster ids at the finest level.
  std::vector<int> owner((std::size_t)(side * side), -1);
  for (std::size_t k = 0; k < cs.boxes.size(); ++k) {
    const auto& b = cs.boxes[k];
    if (b.level > depth)
      fail_validation("out-of-range", "cluster box below the raster level");
    long long s = ipow_checked(base, depth - b.level);
    for (long long y = b.j * s; y < (b.j + 1) * s; ++y)
      for (long long x = b.i * s; x < (b.i + 1) * s; ++x)
        owner[(std::size_t)(y * side + x)] = cs.cluster_of[k];
  }

  // Boundary-touching clusters fuse with the exterior.
  std::vector<std::uint8_t> is_boundary(cs.members.size(), 0);
  for (std::size_t k = 0; k < cs.boxes.size(); ++k) {
    const auto& b = cs.boxes[k];
    long long s = ipow_checked(base, b.level);
    if (b.i == 0 || b.j == 0 || b.i == s - 1 || b.j == s - 1)
      is_boundary[(std::size_t)cs.cluster_of[k]] = 1;
  }
  for (std::size_t c = 0; c < is_boundary.size(); ++c)
    if (is_boundary[c]) out.boundary_clusters.push_back((int)c);

  // Uncovered cells and their components; E holds when any cell survives.
  std::vector<int> comp((std::size_t)(side * side), -1);
  std::vector<long long> comp_cells;
  std::deque<long long> queue;
  auto uncovered = [&](long long idx) {
    return owner[(std::size_t)idx] < 0 || !is_boundary[(std::size_t)owner[(std::size_t)idx]];
  };
  for (long long start = 0; start < side * side; ++start) {
    if (!uncovered(start) || comp[(std::size_t)start] >= 0) continue;
    int label = (int)comp_cells.size();
    comp_cells.push_back(0);
    comp[(std::size_t)start] = label;
    queue.push_back(start);
    while (!queue.empty()) {
      long long idx = queue.front();
      queue.pop_front();
      comp_cells[(std::size_t)label] += 1;
      long long x = idx % side, y = idx / side;
      const long long nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
      for (auto& [nx, ny] : nb) {
        if (nx < 0 || ny < 0 || nx >= side || ny >= side) continue;
        long long nidx = ny * side + nx;
        if (!uncovered(nidx) || comp[(std::size_t)nidx] >= 0) continue;
        comp[(std::size_t)nidx] = label;
        queue.push_back(nidx);
      }
    }
  }
  out.event_e = !comp_cells.empty();
  out.u_cells.assign((std::size_t)(side * side), 0);
  out.carpet_cells.assign((std::size_t)(side * side), 0);
  out.u_area = Rational(0);
  out.carpet_area = Rational(0);
  if (!out.event_e) return out;

  int u_label = 0;
  for (std::size_t l = 1; l < comp_cells.size(); ++l)
    if (comp_cells[l] > comp_cells[(std::size_t)u_label]) u_label = (int)l;
  for (long long idx = 0; idx < side * side; ++idx)
    out.u_cells[(std::size_t)idx] = comp[(std::size_t)idx] == u_label;
  out.u_area = Rational(comp_cells[(std::size_t)u_label], side) / Rational(side);

  // Clusters inside U: connected, uncovered, so one representative cell tells.
  std::vector<long long> rep_cell(cs.members.size(), -1);
  for (std::size_t k = 0; k < cs.boxes.size(); ++k) {
    const auto& b = cs.boxes[k];
    long long s = ipow_checked(base, depth - b.level);
    long long idx = (b.j * s) * side + (b.i * s);
    rep_cell[(std::size_t)cs.cluster_of[k]] = idx;
  }
  for (std::size_t c = 0; c < cs.members.size(); ++c) {
    if (is_boundary[c]) continue;
    if (out.u_cells[(std::size_t)rep_cell[c]]) out.clusters_in_u.push_back((int)c);
  }

  // Outermost: not inside any other in-U cluster's filling. Only clusters
  // whose bounding box contains the candidate's can enclose it.
  struct BBox {
    long long x0, y0, x1, y1;
  };
  std::unordered_map<int, BBox> bbox;
  for (std::size_t k = 0; k < cs.boxes.size(); ++k) {
    int c = cs.cluster_of[k];
    auto r = detail::int_rect(cs.boxes[k], depth);
    auto [it, fresh] = bbox.try_emplace(c, BBox{r.x0, r.y0, r.x1, r.y1});
    if (!fresh) {
      it->second.x0 = std::min(it->second.x0, r.x0);
      it->second.y0 = std::min(it->second.y0, r.y0);
      it->second.x1 = std::max(it->second.x1, r.x1);
      it->second.y1 = std::max(it->second.y1, r.y1);
    }
  }
  std::unordered_map<int, Filling> fillings;
  auto filling_of = [&](int c) -> const Filling& {
    auto it = fillings.find(c);
    if (it == fillings.end()) {
      std::vector<BoxAddress> boxes;
      for (int k : cs.members[(std::size_t)c]) boxes.push_back(cs.boxes[(std::size_t)k]);
      it = fillings.emplace(c, filling_and_outer_boundary(boxes, base, raster_budget)).first;
    }
    return it->second;
  };
  for (int c : out.clusters_in_u) {
    bool enclosed = false;
    for (int other : out.clusters_in_u) {
      if (other == c || enclosed) continue;
      const auto& bc = bbox[c];
      const auto& bo = bbox[other];
      if (bo.x0 > bc.x0 || bo.y0 > bc.y0 || bo.x1 < bc.x1 || bo.y1 < bc.y1) continue;
      const Filling& f = filling_of(other);
      long long scale_f = ipow_checked(base, depth - f.level);
      // test one cell of c against the filling raster (filling level may be
      // coarser than depth when the cluster bottoms out early)
      long long cx = rep_cell[(std::size_t)c] % side, cy = rep_cell[(std::size_t)c] / side;
      if (f.at(cx / scale_f, cy / scale_f)) enclosed = true;
    }
    if (!enclosed) out.outermost.push_back(c);
  }

  // Carpet: U minus the filling interiors of its outermost clusters.
  out.carpet_cells = out.u_cells;
  for (int c : out.outermost) {
    const Filling& f = filling_of(c);
    long long scale_f = ipow_checked(base, depth - f.level);
    for (long long y = 0; y < side; ++y)
      for (long long x = 0; x < side; ++x)
        if (out.carpet_cells[(std::size_t)(y * side + x)] && f.at(x / scale_f, y / scale_f))
          out.carpet_cells[(std::size_t)(y * side + x)] = 0;
  }
  long long kept = 0;
  for (auto v : out.carpet_cells) kept += v;
  out.carpet_area = Rational(kept, side) / Rational(side);
  return out;
}

}  // namespace carpetlab
