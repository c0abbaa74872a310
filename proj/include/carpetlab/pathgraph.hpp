#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "carpetlab/error.hpp"
#include "carpetlab/rational.hpp"

namespace carpetlab {

// ---------------------------------------------------------------------------
// Multiscale box family on the integer lattice. S_0 is every unit box B(x,1),
// x in Z^2; for m >= 1, S_m = { B(x, 10 rho N^(m-1)) : x in A_(m-1) } where
// the site sets A_m live on rho N^m Z^2 with pairwise L-inf separation at
// least rho N^(m+1) / 10. Boxes are closed L-inf balls; every coordinate and
// distance below is an exact integer.
// ---------------------------------------------------------------------------

struct PathBox {
  int level = 0;           // 0 = unit box; m >= 1 comes from A_(m-1)
  long long x = 0, y = 0;  // center

  friend bool operator==(const PathBox&, const PathBox&) = default;
  friend auto operator<=>(const PathBox& a, const PathBox& b) {
    return std::tie(a.level, a.x, a.y) <=> std::tie(b.level, b.x, b.y);
  }
};

struct ScaleFamily {
  long long rho = 1;
  int base = 2;  // N
  std::vector<std::vector<std::array<long long, 2>>> sites;  // sites[m] = A_m

  int max_box_level() const { return (int)sites.size(); }  // S-levels run 0..sites.size()
};

inline long long box_radius(const ScaleFamily& fam, int level) {
  if (level == 0) return 1;
  return 10 * fam.rho * ipow_checked(fam.base, level - 1);
}

// d(B(x,r1), B(y,r2)) = max(0, |x-y|_inf - r1 - r2).
inline long long box_distance(const ScaleFamily& fam, const PathBox& a, const PathBox& b) {
  long long d = std::max(std::llabs(a.x - b.x), std::llabs(a.y - b.y));
  return std::max((long long)0, d - box_radius(fam, a.level) - box_radius(fam, b.level));
}

inline ScaleFamily make_family(long long rho, int base,
                               std::vector<std::vector<std::array<long long, 2>>> sites) {
  if (rho < 1) fail_validation("out-of-range", "rho must be a positive integer");
  if (base < 2) fail_validation("unsupported-base", "scale base must be >= 2");
  ScaleFamily fam{rho, base, std::move(sites)};
  for (std::size_t m = 0; m < fam.sites.size(); ++m) {
    long long grid = rho * ipow_checked(base, (int)m);
    long long min_sep = rho * ipow_checked(base, (int)m + 1);  // separation * 10
    const auto& a = fam.sites[m];
    for (const auto& s : a)
      if (s[0] % grid != 0 || s[1] % grid != 0)
        fail_validation("family-condition-violated",
                        "site off the rho N^m lattice at tier " + std::to_string(m));
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = i + 1; j < a.size(); ++j) {
        long long d = std::max(std::llabs(a[i][0] - a[j][0]), std::llabs(a[i][1] - a[j][1]));
        if (10 * d < min_sep)
          fail_validation("family-condition-violated",
                          "site pair closer than rho N^(m+1)/10 at tier " + std::to_string(m));
      }
  }
  return fam;
}

// ---------------------------------------------------------------------------
// Paths.
// ---------------------------------------------------------------------------

struct FractalPath {
  std::vector<PathBox> boxes;
  int level = 0;            // max box level on the path
  long long diameter = 0;   // exact L-inf diameter of the box union
};

inline FractalPath finish_path(const ScaleFamily& fam, std::vector<PathBox> boxes) {
  FractalPath p;
  p.boxes = std::move(boxes);
  if (p.boxes.empty()) return p;
  long long x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  bool first = true;
  for (const auto& b : p.boxes) {
    p.level = std::max(p.level, b.level);
    long long r = box_radius(fam, b.level);
    if (first) {
      x0 = b.x - r;
      x1 = b.x + r;
      y0 = b.y - r;
      y1 = b.y + r;
      first = false;
    } else {
      x0 = std::min(x0, b.x - r);
      x1 = std::max(x1, b.x + r);
      y0 = std::min(y0, b.y - r);
      y1 = std::max(y1, b.y + r);
    }
  }
  p.diameter = std::max(x1 - x0, y1 - y0);
  return p;
}

// Self-avoiding + connected, the two path invariants.
inline void validate_path(const ScaleFamily& fam, const FractalPath& p) {
  for (std::size_t i = 0; i < p.boxes.size(); ++i)
    for (std::size_t j = i + 1; j < p.boxes.size(); ++j)
      check(!(p.boxes[i] == p.boxes[j]), "path-self-intersects", "repeated box on a path");
  for (std::size_t i = 0; i + 1 < p.boxes.size(); ++i)
    check(box_distance(fam, p.boxes[i], p.boxes[i + 1]) <= 40 * fam.rho, "path-disconnected",
          "consecutive boxes farther than 40 rho");
}

// ---------------------------------------------------------------------------
// Lifting lattice sites into the family. A site inside some B(z, 10 rho N^m),
// z in A_m, is replaced by that box (lowest tier first, then lexicographically
// smallest center); otherwise it keeps its unit box.
// ---------------------------------------------------------------------------

inline std::vector<PathBox> box_lift(const std::vector<std::array<long long, 2>>& sites,
                                     const ScaleFamily& fam) {
  std::vector<PathBox> out;
  out.reserve(sites.size());
  for (const auto& w : sites) {
    PathBox chosen{0, w[0], w[1]};
    bool found = false;
    for (std::size_t m = 0; m < fam.sites.size() && !found; ++m) {
      long long r = 10 * fam.rho * ipow_checked(fam.base, (int)m);
      PathBox best;
      for (const auto& z : fam.sites[m]) {
        if (std::max(std::llabs(w[0] - z[0]), std::llabs(w[1] - z[1])) > r) continue;
        PathBox cand{(int)m + 1, z[0], z[1]};
        if (!found || std::tie(cand.x, cand.y) < std::tie(best.x, best.y)) best = cand;
        found = true;
      }
      if (found) chosen = best;
    }
    if (!out.empty()) {
      long long site_gap =
          std::max((long long)0, std::max(std::llabs(w[0] - sites[out.size() - 1][0]),
                                          std::llabs(w[1] - sites[out.size() - 1][1])));
      check(box_distance(fam, out.back(), chosen) <= site_gap, "lift-gap-grew",
            "replacement boxes farther apart than the sites they contain");
    }
    out.push_back(chosen);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loop erasure. Starting from the first box, each next entry is the LAST
// element later in the sequence that differs from the current one and lies
// within 40 rho of it; the final entry of the erased sequence is then dropped.
// Maximality of each jump is what makes every non-adjacent output pair more
// than 40 rho apart (a later box within reach would have been jumped to).
// ---------------------------------------------------------------------------

struct LoopErased {
  FractalPath path;
  bool degenerate = false;  // input too short to leave anything behind
};

inline LoopErased loop_erase(const std::vector<PathBox>& seq, const ScaleFamily& fam) {
  for (std::size_t i = 0; i + 1 < seq.size(); ++i)
    if (box_distance(fam, seq[i], seq[i + 1]) > 40 * fam.rho)
      fail_validation("out-of-range", "loop erasure input must have consecutive gaps <= 40 rho");
  LoopErased out;
  if (seq.size() <= 1) {
    out.degenerate = true;
    return out;
  }
  std::vector<PathBox> erased;
  std::size_t pos = 0;
  erased.push_back(seq[0]);
  while (true) {
    long long next = -1;
    for (std::size_t q = seq.size(); q-- > pos + 1;) {
      if (seq[q] == erased.back()) continue;
      if (box_distance(fam, erased.back(), seq[q]) <= 40 * fam.rho) {
        next = (long long)q;
        break;
      }
    }
    if (next < 0) break;
    pos = (std::size_t)next;
    erased.push_back(seq[pos]);
  }
  erased.pop_back();  // the last step is removed by definition
  if (erased.empty()) {
    out.degenerate = true;
    return out;
  }
  out.path = finish_path(fam, std::move(erased));
  return out;
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration of self-avoiding connected paths at level k from one
// start box, with exact per-length counts. The unit-box tier is generated on
// the fly from the distance inequality; the finitely many family boxes are
// scanned directly. The optional fused final step counts (and weighs) leaf
// extensions in closed form instead of recursing into them, which is exact:
// a leaf contributes nothing but its own count and weight.
// ---------------------------------------------------------------------------

struct EnumerationResult {
  std::vector<std::uint64_t> count_per_length;  // [len], len = 1..max_len
  std::vector<FractalPath> paths;               // filled when collect = true
  std::vector<double> min_s0_fraction;          // [len], 2.0 when no path of that length
  std::vector<std::uint64_t> s0_violations;     // [len] paths with fraction < 1/2, len >= N^(k/2)
  std::uint64_t nodes = 0;
  double growth_rate = 0;  // count(max_len)^(1/max_len)
};

namespace detail {

struct PathDfs {
  const ScaleFamily* fam;
  int k = 0;
  int max_len = 0;
  std::uint64_t budget = 0;
  bool collect = false;
  long long reach = 0;  // 40 rho
  int sqrt_gate = 1;    // ceil(N^(k/2)): the fraction bound only binds past this length
  std::vector<PathBox> family_boxes;
  std::vector<PathBox> stack;
  int s0_count = 0;
  EnumerationResult* res;

  void visit() {
    if (++res->nodes > budget)
      fail_budget("enumeration-budget-exceeded",
                  "path enumeration exceeded " + std::to_string(budget) + " nodes");
    int len = (int)stack.size();
    res->count_per_length[(std::size_t)len] += 1;
    double frac = (double)s0_count / (double)len;
    res->min_s0_fraction[(std::size_t)len] =
        std::min(res->min_s0_fraction[(std::size_t)len], frac);
    if (len >= sqrt_gate && frac < 0.5) res->s0_violations[(std::size_t)len] += 1;
    if (collect) res->paths.push_back(finish_path(*fam, stack));
    if (len == max_len) return;
    const PathBox cur = stack.back();  // push() reallocates the stack
    long long r = box_radius(*fam, cur.level) + reach + 1;
    for (long long dy = -r; dy <= r; ++dy)
      for (long long dx = -r; dx <= r; ++dx) {
        PathBox nb{0, cur.x + dx, cur.y + dy};
        if (on_stack(nb)) continue;
        push(nb);
      }
    for (const auto& fb : family_boxes) {
      if (box_distance(*fam, cur, fb) > reach || on_stack(fb)) continue;
      push(fb);
    }
  }

  bool on_stack(const PathBox& b) const {
    for (const auto& s : stack)
      if (s == b) return true;
    return false;
  }

  void push(const PathBox& b) {
    stack.push_back(b);
    if (b.level == 0) ++s0_count;
    visit();
    if (b.level == 0) --s0_count;
    stack.pop_back();
  }
};

}  // namespace detail

inline EnumerationResult enumerate_paths(const PathBox& start, int k, int max_len,
                                         const ScaleFamily& fam,
                                         std::uint64_t node_budget = 10000000,
                                         bool collect = false) {
  if (max_len < 1) fail_validation("out-of-range", "path length cap must be >= 1");
  if (k < 0 || k > fam.max_box_level())
    fail_validation("out-of-range", "path level outside the family's tiers");
  if (start.level > k) fail_validation("out-of-range", "start box above the path level");
  EnumerationResult res;
  res.count_per_length.assign((std::size_t)max_len + 1, 0);
  res.min_s0_fraction.assign((std::size_t)max_len + 1, 2.0);
  res.s0_violations.assign((std::size_t)max_len + 1, 0);
  detail::PathDfs dfs;
  dfs.fam = &fam;
  dfs.k = k;
  dfs.max_len = max_len;
  dfs.budget = node_budget;
  dfs.collect = collect;
  dfs.reach = 40 * fam.rho;
  dfs.sqrt_gate = (int)std::ceil(std::pow((double)fam.base, 0.5 * k));
  dfs.res = &res;
  for (int m = 1; m <= k; ++m)
    for (const auto& z : fam.sites[(std::size_t)m - 1])
      dfs.family_boxes.push_back(PathBox{m, z[0], z[1]});
  dfs.stack.push_back(start);
  dfs.s0_count = start.level == 0 ? 1 : 0;
  dfs.visit();
  if (res.count_per_length[(std::size_t)max_len] > 0)
    res.growth_rate =
        std::pow((double)res.count_per_length[(std::size_t)max_len], 1.0 / max_len);
  return res;
}

// ---------------------------------------------------------------------------
// Weights: w(a) = beta N^(-8m) for a in S_m, w(P) the product along the path.
// beta is admissible when sqrt(beta) <= 1/2 and every box's neighbor sum
// sum_b sqrt(w(a) w(b)) stays <= 1/2; both are what the union bound needs.
// ---------------------------------------------------------------------------

inline long double box_weight(const ScaleFamily& fam, double beta, int level) {
  return (long double)beta * std::pow((long double)fam.base, -8.0L * level);
}

inline long double path_weight(const FractalPath& p, const ScaleFamily& fam, double beta) {
  long double w = 1.0L;
  for (const auto& b : p.boxes) w *= box_weight(fam, beta, b.level);
  return w;
}

struct AdmissibilityReport {
  bool admissible = false;
  double worst_sum = 0;   // max over boxes of the neighbor sum
  PathBox worst_box;
};

// The unit-box lattice is translation invariant away from the family, so the
// supremum over S_0 is attained either far away (pure unit-unit sum) or at
// one of the finitely many lattice sites within reach of a family box.
inline AdmissibilityReport admissibility_check(const ScaleFamily& fam, double beta) {
  if (!(beta > 0)) fail_validation("out-of-range", "beta must be positive");
  AdmissibilityReport rep;
  const long long reach = 40 * fam.rho;
  std::vector<PathBox> family_boxes;
  for (std::size_t m = 0; m < fam.sites.size(); ++m)
    for (const auto& z : fam.sites[m]) family_boxes.push_back(PathBox{(int)m + 1, z[0], z[1]});

  const long long unit_pairs = (2 * (reach + 2) + 1) * (2 * (reach + 2) + 1) - 1;
  auto neighbor_sum = [&](const PathBox& a) {
    long double w_a = box_weight(fam, beta, a.level);
    long double s = 0;
    if (a.level == 0) {
      s += (long double)unit_pairs * std::sqrt(w_a * (long double)beta);
    } else {
      long long r = box_radius(fam, a.level) + reach + 1;
      long long count = (2 * r + 1) * (2 * r + 1);
      s += (long double)count * std::sqrt(w_a * (long double)beta);
    }
    for (const auto& fb : family_boxes) {
      if (fb == a || box_distance(fam, a, fb) > reach) continue;
      s += std::sqrt(w_a * box_weight(fam, beta, fb.level));
    }
    return (double)s;
  };

  auto consider = [&](const PathBox& a) {
    double s = neighbor_sum(a);
    if (s > rep.worst_sum) {
      rep.worst_sum = s;
      rep.worst_box = a;
    }
  };
  consider(PathBox{0, (long long)1e9, (long long)1e9});  // generic far-away unit box
  for (const auto& fb : family_boxes) {
    consider(fb);
    long long r = box_radius(fam, fb.level) + reach + 1;
    for (long long dy = -r; dy <= r; ++dy)
      for (long long dx = -r; dx <= r; ++dx)
        consider(PathBox{0, fb.x + dx, fb.y + dy});
  }
  rep.admissible = rep.worst_sum <= 0.5 && std::sqrt(beta) <= 0.5;
  return rep;
}

struct WeightSums {
  std::vector<double> partial;  // [len] = sum of w(P) over paths of length exactly len
  double total = 0;             // running sum over all lengths <= len_cap
  std::vector<std::uint64_t> count_per_length;
  std::uint64_t nodes = 0;
};

namespace detail {

struct WeightDfs {
  const ScaleFamily* fam;
  int len_cap = 0;
  double beta = 0;
  std::uint64_t budget = 0;
  bool fused = true;
  long long reach = 0;
  std::vector<PathBox> family_boxes;
  std::vector<PathBox> stack;
  long double w_here = 1.0L;
  WeightSums* res;

  void visit() {
    if (++res->nodes > budget)
      fail_budget("enumeration-budget-exceeded",
                  "weight enumeration exceeded " + std::to_string(budget) + " nodes");
    int len = (int)stack.size();
    res->partial[(std::size_t)len] += (double)w_here;
    res->count_per_length[(std::size_t)len] += 1;
    if (len == len_cap) return;
    const PathBox cur = stack.back();  // push() reallocates the stack
    if (fused && len == len_cap - 1) {
      // closed-form leaf layer: count reachable unit boxes, subtract the ones
      // already on the stack, then add the reachable family boxes one by one
      long long r = box_radius(*fam, cur.level) + reach + 1;
      long long units = (2 * r + 1) * (2 * r + 1);
      for (const auto& s : stack)
        if (s.level == 0 && std::max(std::llabs(s.x - cur.x), std::llabs(s.y - cur.y)) <= r)
          --units;
      long double leaf = (long double)units * w_here * box_weight(*fam, beta, 0);
      std::uint64_t cnt = (std::uint64_t)units;
      for (const auto& fb : family_boxes) {
        if (box_distance(*fam, cur, fb) > reach || on_stack(fb)) continue;
        leaf += w_here * box_weight(*fam, beta, fb.level);
        ++cnt;
      }
      res->partial[(std::size_t)len_cap] += (double)leaf;
      res->count_per_length[(std::size_t)len_cap] += cnt;
      return;
    }
    long long r = box_radius(*fam, cur.level) + reach + 1;
    for (long long dy = -r; dy <= r; ++dy)
      for (long long dx = -r; dx <= r; ++dx) {
        PathBox nb{0, cur.x + dx, cur.y + dy};
        if (on_stack(nb)) continue;
        push(nb);
      }
    for (const auto& fb : family_boxes) {
      if (box_distance(*fam, cur, fb) > reach || on_stack(fb)) continue;
      push(fb);
    }
  }

  bool on_stack(const PathBox& b) const {
    for (const auto& s : stack)
      if (s == b) return true;
    return false;
  }

  void push(const PathBox& b) {
    stack.push_back(b);
    long double saved = w_here;
    w_here *= box_weight(*fam, beta, b.level);
    visit();
    w_here = saved;
    stack.pop_back();
  }
};

}  // namespace detail

inline WeightSums cumulative_weight(const PathBox& start, const ScaleFamily& fam, double beta,
                                    int len_cap, std::uint64_t node_budget = 10000000,
                                    bool fused = true) {
  if (len_cap < 1) fail_validation("out-of-range", "length cap must be >= 1");
  auto adm = admissibility_check(fam, beta);
  if (!adm.admissible)
    fail_validation("beta-too-large",
                    "neighbor sum " + std::to_string(adm.worst_sum) + " exceeds 1/2");
  WeightSums ws;
  ws.partial.assign((std::size_t)len_cap + 1, 0.0);
  ws.count_per_length.assign((std::size_t)len_cap + 1, 0);
  detail::WeightDfs dfs;
  dfs.fam = &fam;
  dfs.len_cap = len_cap;
  dfs.beta = beta;
  dfs.budget = node_budget;
  dfs.fused = fused;
  dfs.reach = 40 * fam.rho;
  dfs.res = &ws;
  for (std::size_t m = 0; m < fam.sites.size(); ++m)
    for (const auto& z : fam.sites[m]) dfs.family_boxes.push_back(PathBox{(int)m + 1, z[0], z[1]});
  dfs.stack.push_back(start);
  dfs.w_here = box_weight(fam, beta, start.level);
  dfs.visit();
  for (double v : ws.partial) ws.total += v;
  return ws;
}

// ---------------------------------------------------------------------------
// Bound reports. Both lemma-shaped checks are conditional on the asymptotic
// regime (N beyond the proof constant C); outside it the reports say so
// instead of failing paths the lemma never promised to cover.
// ---------------------------------------------------------------------------

struct LengthBoundReport {
  double c_constant = 0;       // C = 10000 rho
  bool c_bound_applicable = false;  // the (1-C/N)^k factor only means anything for N > C or k = 0
  std::uint64_t checked = 0;
  std::uint64_t vacuous = 0;   // diameter below N^k
  std::uint64_t c_bound_violations = 0;  // len < (1/C)(1-C/N)^k D
  std::uint64_t sqrt_violations = 0;     // len < N^(k/2)
};

inline LengthBoundReport check_length_bound(const std::vector<FractalPath>& paths, int k,
                                            const ScaleFamily& fam) {
  LengthBoundReport rep;
  rep.c_constant = 10000.0 * (double)fam.rho;
  rep.c_bound_applicable = (double)fam.base > rep.c_constant || k == 0;
  double nk = std::pow((double)fam.base, (double)k);
  double factor = std::pow(1.0 - rep.c_constant / fam.base, (double)k) / rep.c_constant;
  for (const auto& p : paths) {
    if ((double)p.diameter < nk) {
      ++rep.vacuous;
      continue;
    }
    ++rep.checked;
    double len = (double)p.boxes.size();
    if (rep.c_bound_applicable && len < factor * (double)p.diameter) ++rep.c_bound_violations;
    if (len < std::pow((double)fam.base, 0.5 * k)) ++rep.sqrt_violations;
  }
  return rep;
}

struct BoxFractionReport {
  bool applicable = false;  // needs N > C
  double c_constant = 0;
  std::uint64_t checked = 0;
  std::uint64_t violations = 0;
};

// Tier-m population bound 2^(k-m) + C L / (N-C)^m for 1 <= m <= k.
inline BoxFractionReport check_box_fraction(const std::vector<FractalPath>& paths, int k,
                                            const ScaleFamily& fam, double c_constant) {
  BoxFractionReport rep;
  rep.c_constant = c_constant;
  rep.applicable = (double)fam.base > c_constant;
  if (!rep.applicable) return rep;
  for (const auto& p : paths) {
    ++rep.checked;
    std::vector<std::uint64_t> per_level((std::size_t)k + 1, 0);
    for (const auto& b : p.boxes) per_level[(std::size_t)b.level] += 1;
    double L = (double)p.boxes.size();
    for (int m = 1; m <= k; ++m) {
      double bound = std::pow(2.0, (double)(k - m)) +
                     c_constant * L / std::pow((double)fam.base - c_constant, (double)m);
      if ((double)per_level[(std::size_t)m] > bound) ++rep.violations;
    }
  }
  return rep;
}

}  // namespace carpetlab
