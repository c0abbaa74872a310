#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <unordered_map>
#include <vector>

#include "carpetlab/error.hpp"
#include "carpetlab/percolation.hpp"
#include "carpetlab/rational.hpp"

namespace carpetlab {

// One step of the goodness recursion: the probability that at most one of the
// N^2 independent child events (each of probability p*x) fails. Both closed
// forms are evaluated in extended precision and must agree; they brace each
// other against transcription slips.
//   form A: (px)^{N^2} + N^2 (px)^{N^2-1} (1 - px)
//   form B: N^2 p^{N^2-1} x^{N^2-1} - (N^2-1) p^{N^2} x^{N^2}
inline double phi(int base, double p, double x) {
  if (base < 2) fail_validation("unsupported-base", "phi needs base >= 2");
  if (!(p >= 0.0 && p <= 1.0) || !(x >= 0.0 && x <= 1.0))
    fail_validation("out-of-range", "phi arguments must lie in [0,1]");
  const long double n2 = (long double)base * base;
  const long double q = (long double)p * (long double)x;
  const long double qk = std::pow(q, n2 - 1.0L);
  const long double a = qk * q + n2 * qk * (1.0L - q);
  const long double b = n2 * std::pow((long double)p, n2 - 1.0L) * std::pow((long double)x, n2 - 1.0L) -
                        (n2 - 1.0L) * std::pow((long double)p, n2) * std::pow((long double)x, n2);
  long double scale = std::max(1.0L, std::fabs(a));
  check(std::fabs(a - b) <= 1e-12L * scale, "phi-form-disagreement",
        "closed forms differ beyond 1e-12 relative");
  return (double)a;
}

struct ThetaSequence {
  std::vector<double> values;           // theta_0 .. theta_M
  std::optional<int> fixed_point_at;    // first m where |theta_m - theta_{m-1}| < 1e-15
  double min_value = 1.0;
  bool min_ge_two_thirds = false;
};

// theta_0 = 1, theta_m = phi(theta_{m-1}); after the fixed-point exit the
// remaining entries repeat the converged value (phi is monotone, so the true
// tail cannot cross back over it at this resolution).
inline ThetaSequence theta_sequence(int base, double p, int M) {
  if (M < 0) fail_validation("out-of-range", "negative iteration count");
  if (M > 1000000) fail_validation("out-of-range", "iteration count over 1e6");
  ThetaSequence ts;
  ts.values.reserve((std::size_t)M + 1);
  ts.values.push_back(1.0);
  for (int m = 1; m <= M; ++m) {
    double next = phi(base, p, ts.values.back());
    if (!ts.fixed_point_at && std::fabs(next - ts.values.back()) < 1e-15)
      ts.fixed_point_at = m;
    if (ts.fixed_point_at) {
      ts.values.insert(ts.values.end(), (std::size_t)(M - m + 1), next);
      break;
    }
    ts.values.push_back(next);
  }
  ts.min_value = *std::min_element(ts.values.begin(), ts.values.end());
  ts.min_ge_two_thirds = ts.min_value >= 2.0 / 3.0;
  return ts;
}

struct ThresholdResult {
  double p0 = 1.0;          // bisected: smallest p with min theta >= 2/3 (within tol)
  double nu = 0.0;          // largest admissible nu found
  double paper_bound = 1.0; // (1 - nu/2)^(1/N^2), certified sufficient retention
  int theta_cap = 200;
};

// Bisect the smallest p whose theta iteration never dips below 2/3, and search
// the largest nu with phi(1-nu) > 1-nu at p = (1-nu/2)^(1/N^2). The map is
// monotone in p, so the indicator is monotone and bisection is sound.
inline ThresholdResult p0_threshold(int base, double tol, int theta_cap = 200) {
  if (!(tol > 0.0 && tol <= 0.1)) fail_validation("out-of-range", "tol must be in (0, 0.1]");
  ThresholdResult res;
  res.theta_cap = theta_cap;
  auto ok = [&](double p) { return theta_sequence(base, p, theta_cap).min_ge_two_thirds; };
  double lo = 0.0, hi = 1.0;
  if (!ok(hi) || ok(lo))
    fail_validation("no-threshold-found", "indicator has no sign change on [0,1]");
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    (ok(mid) ? hi : lo) = mid;
  }
  res.p0 = hi;

  const double n2 = (double)base * base;
  auto admissible = [&](double nu) {
    if (!(nu > 0.0 && nu < 1.0 / 3.0)) return false;  // need 1-nu > 2/3
    double p = std::pow(1.0 - nu / 2.0, 1.0 / n2);
    return phi(base, p, 1.0 - nu) > 1.0 - nu;
  };
  // Descending scan for the first admissible grid point, then refine upward.
  const int grid = 4096;
  double found = -1.0, above = 1.0 / 3.0;
  for (int k = grid - 1; k >= 1; --k) {
    double nu = (1.0 / 3.0) * k / grid;
    if (admissible(nu)) {
      found = nu;
      break;
    }
    above = nu;
  }
  if (found < 0.0)
    fail_validation("no-threshold-found", "no admissible nu for the closed-form bound");
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (found + above);
    (admissible(mid) ? found : above) = mid;
  }
  res.nu = found;
  res.paper_bound = std::pow(1.0 - res.nu / 2.0, 1.0 / n2);
  check(res.p0 <= res.paper_bound + tol, "threshold-vs-bound",
        "bisected threshold exceeds the certified sufficient bound");
  return res;
}

// ---------------------------------------------------------------------------
// m-good boxes. 0-good means retained (the root counts as retained surely);
// for m >= 1 a box is m-good when at most one child fails to be both 0-good
// and (m-1)-good. Goodness of a box reads only marks strictly below it, which
// is what makes the child events independent of the box's own mark.
// ---------------------------------------------------------------------------

class GoodnessTable {
 public:
  GoodnessTable(const RetentionTree& tree, int budget) : tree_(&tree), budget_(budget) {
    if (budget < 0) fail_validation("out-of-range", "negative goodness budget");
    if (budget > 63) fail_validation("out-of-range", "goodness budget over 63");
  }

  int budget() const { return budget_; }

  bool is_good(const BoxAddress& b, int m) const {
    if (m < 0 || m > budget_) fail_validation("out-of-range", "m outside [0, budget]");
    if (b.level + m > tree_->config().depth)
      fail_validation("depth-exceeded",
                      "deciding " + std::to_string(m) + "-good at level " +
                          std::to_string(b.level) + " needs marks past the tree depth");
    return eval(b, m);
  }

  // Labels m = 0..budget for one box (the root's sequence is the usual report).
  std::vector<bool> labels(const BoxAddress& b) const {
    std::vector<bool> out;
    out.reserve((std::size_t)budget_ + 1);
    for (int m = 0; m <= budget_; ++m) out.push_back(is_good(b, m));
    return out;
  }

 private:
  bool eval(const BoxAddress& b, int m) const {
    if (m == 0) return tree_->mark(b);
    auto& slot = memo_[b];
    std::uint64_t bit = 1ull << m;
    if (slot.known & bit) return (slot.value & bit) != 0;
    int fails = 0;
    for (const BoxAddress& c : subdivide(b)) {
      if (!tree_->mark(c) || !eval(c, m - 1)) {
        if (++fails >= 2) break;
      }
    }
    bool good = fails <= 1;
    slot.known |= bit;
    if (good) slot.value |= bit;
    return good;
  }

  struct Slot {
    std::uint64_t known = 0, value = 0;
  };
  const RetentionTree* tree_;
  int budget_;
  mutable std::unordered_map<BoxAddress, Slot, BoxKeyHash> memo_;
};

inline GoodnessTable classify_m_good(const RetentionTree& tree, int budget) {
  if (budget > tree.config().depth)
    fail_validation("depth-exceeded", "budget exceeds sampled tree depth");
  return GoodnessTable(tree, budget);
}

// ---------------------------------------------------------------------------
// (m,n)-good sites. The classifier never sees the field recursion itself: it
// takes an injected bad/good labeling of the level-(n+1) sites (whatever
// notion of bad the caller composed) and answers the purely geometric
// question about bad-box components near one level-n site.
// ---------------------------------------------------------------------------

// eps = 2^-k; the scale must be dyadic, and finer than 1/100 unless the caller
// explicitly opts into coarse scales for boundary-case tests.
struct DyadicScale {
  int k = 7;
  Rational value() const { return Rational(1, 1ll << k); }
};

inline DyadicScale make_scale(int k, bool allow_coarse = false) {
  if (k < 1 || k > 20) fail_validation("out-of-range", "dyadic exponent outside [1,20]");
  if (!allow_coarse && (1ll << k) <= 100)
    fail_validation("out-of-range", "eps must be < 1/100 (pass allow_coarse to override)");
  return DyadicScale{k};
}

// Bad/good labels on a rectangle of level-(n+1) sites. Coordinates are in
// units of eps^(n+1), the natural integer grid for everything below.
struct SiteField {
  DyadicScale eps;
  int n = 0;
  long long x_lo = 0, x_hi = -1, y_lo = 0, y_hi = -1;  // inclusive window
  std::vector<std::uint8_t> bad;                       // (x_hi-x_lo+1)*(y_hi-y_lo+1), x fastest

  long long width() const { return x_hi - x_lo + 1; }
  long long height() const { return y_hi - y_lo + 1; }
  bool in_window(long long x, long long y) const {
    return x >= x_lo && x <= x_hi && y >= y_lo && y <= y_hi;
  }
  bool bad_at(long long x, long long y) const {
    return bad[(std::size_t)((y - y_lo) * width() + (x - x_lo))] != 0;
  }
};

inline SiteField make_site_field(DyadicScale eps, int n, long long x_lo, long long x_hi,
                                 long long y_lo, long long y_hi) {
  if (x_hi < x_lo || y_hi < y_lo) fail_validation("empty-region", "site window is empty");
  if (n < 0) fail_validation("out-of-range", "negative level");
  if ((long long)eps.k * (n + 1) > 61)
    fail_validation("out-of-range", "eps^(n+1) underflows 64-bit rationals");
  SiteField f;
  f.eps = eps;
  f.n = n;
  f.x_lo = x_lo;
  f.x_hi = x_hi;
  f.y_lo = y_lo;
  f.y_hi = y_hi;
  f.bad.assign((std::size_t)(f.width() * f.height()), 0);
  return f;
}

struct SiteComponent {
  std::vector<std::pair<long long, long long>> sites;
  long long span = 0;        // max coordinate spread, units of eps^(n+1)
  Rational diameter;         // (span + 2) * eps^(n+1), the box-union L-inf diameter
  bool within_bound = false; // diameter <= eps^n / 4
};

struct MnGoodResult {
  bool good = true;
  Rational threshold;  // eps^n / 4
  std::vector<SiteComponent> components;
};

// Decide (m,n)-goodness of the level-n site x. The field's bad labels stand
// for "(m-1, n+1)-bad or (0, n+1)-bad"; closed boxes of radius eps^(n+1)
// around bad sites are unioned (corner contact connects), and the site is good
// iff every component has L-inf diameter at most eps^n / 4.
inline MnGoodResult classify_mn_good(const SiteField& field, long long x, long long y) {
  const long long r = 1ll << field.eps.k;  // eps^n / eps^(n+1) = 1/eps
  if (x % r != 0 || y % r != 0)
    fail_validation("out-of-range", "site is not on the level-n lattice");
  // The open ball B(x, eps^n) meets V_(n+1) in sites strictly within r units.
  if (!field.in_window(x - r + 1, y - r + 1) || !field.in_window(x + r - 1, y + r - 1))
    fail_validation("field-window-too-small",
                    "field window does not cover B(x, eps^n) at this site");

  std::vector<std::pair<long long, long long>> bad_sites;
  for (long long sy = y - r + 1; sy <= y + r - 1; ++sy)
    for (long long sx = x - r + 1; sx <= x + r - 1; ++sx)
      if (field.bad_at(sx, sy)) bad_sites.emplace_back(sx, sy);

  MnGoodResult res;
  long long den_n = 1ll << ((long long)field.eps.k * field.n);
  res.threshold = Rational(1, den_n) / Rational(4);

  // Closed radius-1 boxes (in eps^(n+1) units) share a point iff centers are
  // within L-inf distance 2.
  const int m = (int)bad_sites.size();
  detail::UnionFind uf((std::size_t)std::max(m, 1));
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b)
      if (std::llabs(bad_sites[a].first - bad_sites[b].first) <= 2 &&
          std::llabs(bad_sites[a].second - bad_sites[b].second) <= 2)
        uf.unite(a, b);

  std::unordered_map<int, int> comp_id;
  for (int a = 0; a < m; ++a) {
    int root = uf.find(a);
    auto [it, fresh] = comp_id.try_emplace(root, (int)res.components.size());
    if (fresh) res.components.emplace_back();
    res.components[it->second].sites.push_back(bad_sites[a]);
  }
  long long den_n1 = 1ll << ((long long)field.eps.k * (field.n + 1));
  for (auto& comp : res.components) {
    long long min_x = comp.sites[0].first, max_x = min_x;
    long long min_y = comp.sites[0].second, max_y = min_y;
    for (auto& [sx, sy] : comp.sites) {
      min_x = std::min(min_x, sx);
      max_x = std::max(max_x, sx);
      min_y = std::min(min_y, sy);
      max_y = std::max(max_y, sy);
    }
    comp.span = std::max(max_x - min_x, max_y - min_y);
    comp.diameter = Rational(comp.span + 2, den_n1);
    comp.within_bound = comp.diameter <= res.threshold;
    if (!comp.within_bound) res.good = false;
  }
  return res;
}

}  // namespace carpetlab
