#pragma once
#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <numeric>
#include <unordered_map>
#include <vector>

#include "carpetlab/boxlattice.hpp"
#include "carpetlab/error.hpp"
#include "carpetlab/rational.hpp"
#include "carpetlab/rng.hpp"

namespace carpetlab {

// Fractal percolation on the N-adic lattice: every box of every level >= 1
// carries an independent Bernoulli(p) retention mark; A_n is the union of
// level-n boxes whose whole ancestor chain is retained. Marks come from the
// counter RNG, so a tree is fully determined by (base, p, depth, seed) and
// nothing needs to be stored to reproduce it.
struct RetentionConfig {
  int base = 2;
  double p = 0.5;
  int depth = 1;
  std::uint64_t seed = 0;
  int depth_limit = 12;
};

class RetentionTree {
 public:
  static RetentionTree sample(const RetentionConfig& cfg) {
    if (cfg.base < 2) fail_validation("unsupported-base", "subdivision base must be >= 2");
    if (!(cfg.p >= 0.0 && cfg.p <= 1.0))
      fail_validation("out-of-range", "retention probability outside [0,1]");
    if (cfg.depth < 0) fail_validation("out-of-range", "negative depth");
    if (cfg.depth > cfg.depth_limit)
      fail_validation("depth-exceeded", "depth " + std::to_string(cfg.depth) +
                                            " over limit " + std::to_string(cfg.depth_limit));
    ipow_checked(cfg.base, cfg.depth);  // indices must stay in 64 bits
    return RetentionTree(cfg);
  }

  const RetentionConfig& config() const { return cfg_; }

  // sigma_B. The root is kept surely; every deeper box is Bernoulli(p).
  bool mark(const BoxAddress& b) const {
    if (b.level == 0) return true;
    return box_mark(cfg_.seed, b.level, b.i, b.j, cfg_.p);
  }

  // B lies in A_level: itself and all ancestors are marked.
  bool retained(BoxAddress b) const {
    while (b.level > 0) {
      if (!mark(b)) return false;
      b = parent(b);
    }
    return true;
  }

 private:
  explicit RetentionTree(const RetentionConfig& cfg) : cfg_(cfg) {}
  RetentionConfig cfg_;
};

// Depth-first walk over retained boxes of one level; visits nothing below a
// removed box, so the cost is proportional to the retained skeleton.
inline void for_each_retained(const RetentionTree& tree, int level,
                              const std::function<void(const BoxAddress&)>& fn) {
  if (level < 0 || level > tree.config().depth)
    fail_validation("out-of-range", "level outside [0, depth]");
  std::function<void(const BoxAddress&)> walk = [&](const BoxAddress& b) {
    if (b.level == level) {
      fn(b);
      return;
    }
    for (const BoxAddress& c : subdivide(b))
      if (tree.mark(c)) walk(c);
  };
  walk(root_box(tree.config().base));
}

inline std::uint64_t retained_count(const RetentionTree& tree, int level) {
  std::uint64_t n = 0;
  for_each_retained(tree, level, [&](const BoxAddress&) { ++n; });
  return n;
}

inline std::vector<BoxAddress> retained_set(const RetentionTree& tree, int level) {
  std::vector<BoxAddress> out;
  for_each_retained(tree, level, [&](const BoxAddress& b) { out.push_back(b); });
  return out;
}

// Exact area of A_level: retained count / N^(2*level).
inline Rational retained_area(const RetentionTree& tree, int level) {
  long long den = ipow_checked(tree.config().base, level);
  return Rational((long long)retained_count(tree, level), den) / Rational(den);
}

// Maximal removed boxes down to `depth`: marked 0 while the whole strict
// ancestor chain is marked 1. Their interiors and A_depth tile (0,1)^2.
inline std::vector<BoxAddress> removed_boxes(const RetentionTree& tree, int depth) {
  if (depth < 0 || depth > tree.config().depth)
    fail_validation("out-of-range", "depth outside [0, tree depth]");
  std::vector<BoxAddress> out;
  std::function<void(const BoxAddress&)> walk = [&](const BoxAddress& b) {
    if (b.level == depth) return;
    for (const BoxAddress& c : subdivide(b)) {
      if (tree.mark(c))
        walk(c);
      else
        out.push_back(c);
    }
  };
  walk(root_box(tree.config().base));
  return out;
}

// ---------------------------------------------------------------------------
// Removed-box clusters.
//
// Two removed boxes are edge-adjacent when their closures share a boundary
// segment of positive length. Under corner-closure, a pair meeting at exactly
// one point is additionally joined when a third removed box contains that
// point; at truncation depth some corners have no such witness, and those are
// reported instead of guessed.
// ---------------------------------------------------------------------------

enum class AdjacencyRule { edge_adjacency, corner_closure };

struct CornerContact {
  int a = 0, b = 0;          // indices into ClusterSet::boxes
  Rational x, y;             // the shared point
  bool has_third_box = false;
  bool joined = false;       // union applied (corner-closure with witness)
};

struct ClusterSet {
  AdjacencyRule rule = AdjacencyRule::edge_adjacency;
  std::vector<BoxAddress> boxes;
  std::vector<int> cluster_of;                // per box
  std::vector<std::vector<int>> members;      // per cluster, box indices
  std::vector<CornerContact> corner_contacts; // every one-point contact, with resolution
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Integer rectangle at the common finest level: coordinates scaled by N^lmax.
struct IntRect {
  long long x0, y0, x1, y1;
};

inline IntRect int_rect(const BoxAddress& b, int lmax) {
  long long s = ipow_checked(b.base, lmax - b.level);
  return IntRect{b.i * s, b.j * s, (b.i + 1) * s, (b.j + 1) * s};
}

}  // namespace detail

inline ClusterSet clusters(const std::vector<BoxAddress>& removed, AdjacencyRule rule,
                           int base) {
  ClusterSet cs;
  cs.rule = rule;
  cs.boxes = removed;
  const int n = (int)removed.size();
  cs.cluster_of.assign(n, -1);
  if (n == 0) return cs;

  int lmax = 0;
  for (const auto& b : removed) lmax = std::max(lmax, b.level);
  std::vector<detail::IntRect> rects(n);
  for (int k = 0; k < n; ++k) rects[k] = detail::int_rect(removed[k], lmax);

  detail::UnionFind uf((std::size_t)n);

  // Edge contacts via flush-line sweeps: group boxes by a shared vertical or
  // horizontal line, then join interval pairs overlapping with positive length.
  auto sweep = [&](bool vertical) {
    // key: the flush coordinate; value: (lo, hi, idx, side) with side 0 = box
    // ends at the line, side 1 = box starts there.
    std::map<long long, std::vector<std::array<long long, 4>>> lines;
    for (int k = 0; k < n; ++k) {
      const auto& r = rects[k];
      if (vertical) {
        lines[r.x1].push_back({r.y0, r.y1, k, 0});
        lines[r.x0].push_back({r.y0, r.y1, k, 1});
      } else {
        lines[r.y1].push_back({r.x0, r.x1, k, 0});
        lines[r.y0].push_back({r.x0, r.x1, k, 1});
      }
    }
    for (auto& [coord, items] : lines) {
      (void)coord;
      std::sort(items.begin(), items.end());
      // Active items whose interval is still open; same-side intervals have
      // disjoint interiors, so the active list stays tiny.
      std::vector<std::array<long long, 4>> active;
      for (const auto& it : items) {
        std::erase_if(active, [&](const auto& a) { return a[1] <= it[0]; });
        for (const auto& a : active)
          if (a[3] != it[3] && std::min(a[1], it[1]) > std::max(a[0], it[0]))
            uf.unite((int)a[2], (int)it[2]);
        active.push_back(it);
      }
    }
  };
  sweep(true);
  sweep(false);

  // One-point contacts are always corner-to-corner along a diagonal. Hash the
  // four corner roles separately, then pair NE-SW and SE-NW at equal points.
  auto pack = [](long long x, long long y) {
    return ((__int128)x << 64) ^ (__int128)(unsigned long long)y;
  };
  struct PackHash {
    std::size_t operator()(const __int128& v) const {
      return (std::size_t)mix64((std::uint64_t)(v >> 64) ^ mix64((std::uint64_t)v));
    }
  };
  std::unordered_map<__int128, std::vector<int>, PackHash> ne, sw, se, nw;
  for (int k = 0; k < n; ++k) {
    const auto& r = rects[k];
    ne[pack(r.x1, r.y1)].push_back(k);
    sw[pack(r.x0, r.y0)].push_back(k);
    se[pack(r.x1, r.y0)].push_back(k);
    nw[pack(r.x0, r.y1)].push_back(k);
  }
  // Witness lookup: a third box whose closure contains point P. Disjoint
  // interiors force it to hold P as a corner or on an open edge.
  std::map<long long, std::vector<std::array<long long, 3>>> vedges, hedges;
  for (int k = 0; k < n; ++k) {
    const auto& r = rects[k];
    vedges[r.x0].push_back({r.y0, r.y1, k});
    vedges[r.x1].push_back({r.y0, r.y1, k});
    hedges[r.y0].push_back({r.x0, r.x1, k});
    hedges[r.y1].push_back({r.x0, r.x1, k});
  }
  auto third_box_at = [&](long long px, long long py, int a, int b) {
    auto corner_hit = [&](auto& m) {
      auto it = m.find(pack(px, py));
      if (it == m.end()) return -1;
      for (int k : it->second)
        if (k != a && k != b) return k;
      return -1;
    };
    int k = corner_hit(ne);
    if (k < 0) k = corner_hit(sw);
    if (k < 0) k = corner_hit(se);
    if (k < 0) k = corner_hit(nw);
    if (k >= 0) return k;
    if (auto it = vedges.find(px); it != vedges.end())
      for (const auto& e : it->second)
        if (e[0] < py && py < e[1] && e[2] != a && e[2] != b) return (int)e[2];
    if (auto it = hedges.find(py); it != hedges.end())
      for (const auto& e : it->second)
        if (e[0] < px && px < e[1] && e[2] != a && e[2] != b) return (int)e[2];
    return -1;
  };

  long long scale = ipow_checked(base, lmax);
  auto record_corner = [&](int a, int b, long long px, long long py) {
    if (a > b) std::swap(a, b);
    CornerContact cc;
    cc.a = a;
    cc.b = b;
    cc.x = Rational(px, scale);
    cc.y = Rational(py, scale);
    cc.has_third_box = third_box_at(px, py, a, b) >= 0;
    cc.joined = rule == AdjacencyRule::corner_closure && cc.has_third_box;
    if (cc.joined) uf.unite(a, b);
    cs.corner_contacts.push_back(cc);
  };
  for (const auto& [pt, as] : ne) {
    auto it = sw.find(pt);
    if (it == sw.end()) continue;
    for (int a : as)
      for (int b : it->second)
        record_corner(a, b, rects[a].x1, rects[a].y1);
  }
  for (const auto& [pt, as] : se) {
    auto it = nw.find(pt);
    if (it == nw.end()) continue;
    for (int a : as)
      for (int b : it->second)
        record_corner(a, b, rects[a].x1, rects[a].y0);
  }

  // Compact cluster ids in first-seen order.
  std::unordered_map<int, int> id;
  for (int k = 0; k < n; ++k) {
    int r = uf.find(k);
    auto [it, fresh] = id.try_emplace(r, (int)id.size());
    cs.cluster_of[k] = it->second;
    if (fresh) cs.members.emplace_back();
    cs.members[it->second].push_back(k);
  }
  return cs;
}

// ---------------------------------------------------------------------------
// Filling and outer boundary of one cluster: rasterize at the cluster's finest
// level, flood the complement from outside, and keep what is unreachable.
// ---------------------------------------------------------------------------

struct Filling {
  int base = 2;
  int level = 0;                 // raster cell side is base^-level
  long long ox = 0, oy = 0;      // window origin in level cells
  long long w = 0, h = 0;        // window size in cells
  std::vector<std::uint8_t> cells;  // w*h, 1 = belongs to the filling F
  std::vector<std::pair<Rational, Rational>> outer_boundary;  // closed polyline
  Rational area;                 // exact area of F

  bool at(long long x, long long y) const {
    if (x < ox || y < oy || x >= ox + w || y >= oy + h) return false;
    return cells[(std::size_t)((y - oy) * w + (x - ox))] != 0;
  }
};

inline Filling filling_and_outer_boundary(const std::vector<BoxAddress>& cluster_boxes,
                                          int base,
                                          std::size_t raster_budget = (std::size_t)1 << 26) {
  if (cluster_boxes.empty()) fail_validation("empty-region", "cluster has no boxes");
  int lmax = 0;
  for (const auto& b : cluster_boxes) lmax = std::max(lmax, b.level);
  std::vector<detail::IntRect> rects;
  rects.reserve(cluster_boxes.size());
  for (const auto& b : cluster_boxes) rects.push_back(detail::int_rect(b, lmax));

  long long x0 = rects[0].x0, y0 = rects[0].y0, x1 = rects[0].x1, y1 = rects[0].y1;
  for (const auto& r : rects) {
    x0 = std::min(x0, r.x0);
    y0 = std::min(y0, r.y0);
    x1 = std::max(x1, r.x1);
    y1 = std::max(y1, r.y1);
  }
  // one-cell margin so the outside flood wraps around the cluster
  Filling f;
  f.base = base;
  f.level = lmax;
  f.ox = x0 - 1;
  f.oy = y0 - 1;
  f.w = (x1 - x0) + 2;
  f.h = (y1 - y0) + 2;
  if ((std::uint64_t)f.w * (std::uint64_t)f.h > raster_budget)
    fail_budget("enumeration-budget-exceeded",
                "cluster raster needs " + std::to_string(f.w * f.h) + " cells");

  std::vector<std::uint8_t> occ((std::size_t)(f.w * f.h), 0);
  for (const auto& r : rects)
    for (long long y = r.y0; y < r.y1; ++y)
      for (long long x = r.x0; x < r.x1; ++x)
        occ[(std::size_t)((y - f.oy) * f.w + (x - f.ox))] = 1;

  // Flood the complement from the margin; 4-adjacency matches open-set
  // connectivity of the complement of a closed box union.
  std::vector<std::uint8_t> outside((std::size_t)(f.w * f.h), 0);
  std::deque<std::pair<long long, long long>> queue;
  auto push = [&](long long x, long long y) {
    if (x < 0 || y < 0 || x >= f.w || y >= f.h) return;
    std::size_t idx = (std::size_t)(y * f.w + x);
    if (occ[idx] || outside[idx]) return;
    outside[idx] = 1;
    queue.emplace_back(x, y);
  };
  push(0, 0);
  while (!queue.empty()) {
    auto [x, y] = queue.front();
    queue.pop_front();
    push(x + 1, y);
    push(x - 1, y);
    push(x, y + 1);
    push(x, y - 1);
  }
  f.cells.assign((std::size_t)(f.w * f.h), 0);
  long long filled = 0;
  for (std::size_t i = 0; i < f.cells.size(); ++i) {
    f.cells[i] = outside[i] ? 0 : 1;
    filled += f.cells[i];
  }
  long long den = ipow_checked(base, lmax);
  f.area = Rational(filled) / Rational(den) / Rational(den);

  // Outer boundary: directed cell edges with F on the left, stitched into the
  // single outer loop by taking the rightmost available turn at each vertex.
  // Corner pinches are traversed twice, once per incident lobe.
  std::map<std::pair<long long, long long>, std::vector<std::pair<long long, long long>>> out_edges;
  auto cell_filled = [&](long long x, long long y) {
    if (x < 0 || y < 0 || x >= f.w || y >= f.h) return false;
    return f.cells[(std::size_t)(y * f.w + x)] != 0;
  };
  std::pair<long long, long long> start{-1, -1};
  for (long long y = 0; y < f.h; ++y)
    for (long long x = 0; x < f.w; ++x) {
      if (!cell_filled(x, y)) continue;
      if (!cell_filled(x, y - 1)) {  // bottom edge, left-to-right
        out_edges[{x, y}].push_back({x + 1, y});
        if (start.first < 0) start = {x, y};
      }
      if (!cell_filled(x + 1, y)) out_edges[{x + 1, y}].push_back({x + 1, y + 1});
      if (!cell_filled(x, y + 1)) out_edges[{x + 1, y + 1}].push_back({x, y + 1});
      if (!cell_filled(x - 1, y)) out_edges[{x, y + 1}].push_back({x, y});
    }
  if (start.first >= 0) {
    std::pair<long long, long long> at = start;
    std::pair<long long, long long> dir{0, 0};
    do {
      auto& outs = out_edges[at];
      std::size_t pick = 0;
      if (outs.size() > 1 && (dir.first || dir.second)) {
        // rightmost turn relative to the incoming direction
        auto angle_rank = [&](const std::pair<long long, long long>& to) {
          long long dx = to.first - at.first, dy = to.second - at.second;
          long long cross = dir.first * dy - dir.second * dx;
          long long dot = dir.first * dx + dir.second * dy;
          if (cross < 0) return 0;             // right turn
          if (cross == 0 && dot > 0) return 1; // straight
          if (cross > 0) return 2;             // left turn
          return 3;                            // reverse
        };
        for (std::size_t k = 1; k < outs.size(); ++k)
          if (angle_rank(outs[k]) < angle_rank(outs[pick])) pick = k;
      }
      auto to = outs[pick];
      outs.erase(outs.begin() + (long long)pick);
      dir = {to.first - at.first, to.second - at.second};
      f.outer_boundary.emplace_back(Rational(f.ox + at.first, den),
                                    Rational(f.oy + at.second, den));
      at = to;
    } while (at != start);
    f.outer_boundary.push_back(f.outer_boundary.front());  // close the loop
  }
  return f;
}

// Per-level removed-box counts and exact areas; feeds the CSV emitter.
struct RemovedStats {
  std::vector<std::uint64_t> count_per_level;  // index = level, [0] unused
  Rational total_area;
};

inline RemovedStats removed_stats(const std::vector<BoxAddress>& removed, int base, int depth) {
  RemovedStats st;
  st.count_per_level.assign((std::size_t)depth + 1, 0);
  st.total_area = Rational(0);
  for (const auto& b : removed) {
    st.count_per_level[(std::size_t)b.level] += 1;
    long long den = ipow_checked(base, b.level);
    st.total_area = st.total_area + Rational(1, den) / Rational(den);
  }
  return st;
}

}  // namespace carpetlab
