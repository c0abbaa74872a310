#pragma once
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "carpetlab/error.hpp"
#include "carpetlab/percolation.hpp"  // detail::UnionFind
#include "carpetlab/rng.hpp"

namespace carpetlab {

// ---------------------------------------------------------------------------
// Chordal Loewner evolution driven by W_t = sqrt(kappa) B_t, discretized with
// vertical-slit elementary maps: holding the driving constant at xi over a
// step of length dt solves the equation exactly, with forward map
// g(z) = xi + sqrt((z-xi)^2 + 4dt) and inverse h(w) = xi + sqrt((w-xi)^2-4dt),
// both on the branch with nonnegative imaginary part. Every elementary map
// adds exactly 2dt of half-plane capacity, so the composed hull has capacity
// 2T by construction.
// ---------------------------------------------------------------------------

struct DrivingPath {
  double kappa = 0;
  double t_horizon = 0;
  double dt = 0;
  std::vector<double> w;  // w[k] = W at time k*dt, w[0] = 0
  std::uint64_t seed = 0;

  int steps() const { return (int)w.size() - 1; }
};

inline DrivingPath sample_driving(double kappa, double t_horizon, double dt,
                                  std::uint64_t seed) {
  if (!(kappa >= 0)) fail_validation("out-of-range", "kappa must be >= 0");
  if (!(dt > 0) || !(t_horizon >= dt))
    fail_validation("out-of-range", "need dt > 0 and T >= dt");
  double kd = t_horizon / dt;
  long long k = std::llround(kd);
  if (k < 1 || std::abs(kd - (double)k) > 1e-9 * std::max(1.0, kd))
    fail_validation("out-of-range", "time horizon must be an integer number of steps");
  if (k > 2000000) fail_validation("out-of-range", "too many steps");
  DrivingPath d;
  d.kappa = kappa;
  d.t_horizon = t_horizon;
  d.dt = dt;
  d.seed = seed;
  d.w.resize((std::size_t)k + 1, 0.0);
  // the Brownian increments depend on the seed alone, so sweeps over kappa
  // with a shared seed are coupled through one underlying motion
  StreamRng rng(seed);
  double scale = std::sqrt(kappa * dt);
  for (long long i = 1; i <= k; ++i)
    d.w[(std::size_t)i] = d.w[(std::size_t)i - 1] + scale * rng.next_gaussian();
  return d;
}

namespace detail {

// principal sqrt flipped onto the Im >= 0 branch
inline std::complex<double> sqrt_upper(std::complex<double> z) {
  std::complex<double> r = std::sqrt(z);
  if (r.imag() < 0) r = -r;
  return r;
}

}  // namespace detail

struct TracePolyline {
  double kappa = 0;
  double t_horizon = 0;
  double dt = 0;
  std::vector<std::complex<double>> tips;  // gamma(k*dt), tips[0] = 0
};

// Tip at the final time only: one backward pass through the inverse maps.
inline std::complex<double> trace_tip(const DrivingPath& d) {
  const int k = d.steps();
  std::complex<double> w(d.w[(std::size_t)k], 0.0);
  for (int j = k; j >= 1; --j) {
    std::complex<double> u = w - d.w[(std::size_t)j];
    w = d.w[(std::size_t)j] + detail::sqrt_upper(u * u - 4.0 * d.dt);
    if (!std::isfinite(w.real()) || !std::isfinite(w.imag()))
      fail_invariant("map-composition-overflow", "tip diverged at depth " + std::to_string(j));
  }
  return w;
}

inline TracePolyline trace(const DrivingPath& d) {
  TracePolyline t;
  t.kappa = d.kappa;
  t.t_horizon = d.t_horizon;
  t.dt = d.dt;
  const int k = d.steps();
  t.tips.resize((std::size_t)k + 1, std::complex<double>(0.0, 0.0));
  for (int m = 1; m <= k; ++m) {
    std::complex<double> w(d.w[(std::size_t)m], 0.0);
    for (int j = m; j >= 1; --j) {
      std::complex<double> u = w - d.w[(std::size_t)j];
      w = d.w[(std::size_t)j] + detail::sqrt_upper(u * u - 4.0 * d.dt);
      if (!std::isfinite(w.real()) || !std::isfinite(w.imag()))
        fail_invariant("map-composition-overflow",
                       "trace diverged at step " + std::to_string(m) + ", depth " +
                           std::to_string(j));
    }
    check(w.imag() >= -1e-12, "trace-left-half-plane", "tip fell below the real axis");
    t.tips[(std::size_t)m] = w;
  }
  return t;
}

// g_T(z) - z at z = 10^6 i, accumulated as a sum of per-step differences
// 4dt / (sqrt(u^2+4dt) + u) so no large-magnitude cancellation occurs; the
// product (g(z) - z) * z then reads off the 2T/z coefficient.
inline double capacity_estimate(const DrivingPath& d) {
  const std::complex<double> z0(0.0, 1e6);
  std::complex<double> z = z0, diff(0.0, 0.0);
  for (int j = 1; j <= d.steps(); ++j) {
    std::complex<double> u = z - d.w[(std::size_t)j];
    std::complex<double> s = detail::sqrt_upper(u * u + 4.0 * d.dt);
    std::complex<double> delta = 4.0 * d.dt / (s + u);
    diff += delta;
    z += delta;
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
      fail_invariant("map-composition-overflow", "capacity pass diverged at step " +
                                                     std::to_string(j));
  }
  return (diff * z0).real();
}

// ---------------------------------------------------------------------------
// Bubbles: rasterize the polyline at one-pixel thickness inside a window,
// flood-fill the rest 4-connected, and link components whose pixels come
// within Chebyshev distance 2 (the declared finite-resolution stand-in for
// "boundaries intersect").
// ---------------------------------------------------------------------------

struct RealRect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

struct Bubble {
  int id = 0;
  long long pixels = 0;
  int diameter = 0;  // Chebyshev bounding-box extent in pixels
  bool touches_border = false;
};

struct BubbleGraph {
  int w = 0, h = 0;
  double px = 0;
  RealRect window;
  std::vector<int> comp;  // per pixel; -1 = trace
  std::vector<Bubble> bubbles;
  std::vector<std::pair<int, int>> edges;
  bool connected = true;
};

inline BubbleGraph bubble_graph(const TracePolyline& t, RealRect window, double px) {
  if (!(px > 0)) fail_validation("out-of-range", "pixel size must be positive");
  if (!(window.x1 > window.x0) || !(window.y1 > window.y0))
    fail_validation("out-of-range", "window is empty");
  if (window.y0 < 0) fail_validation("out-of-range", "window must lie in the upper half-plane");
  BubbleGraph g;
  g.px = px;
  g.window = window;
  g.w = std::max(1, (int)std::llround((window.x1 - window.x0) / px));
  g.h = std::max(1, (int)std::llround((window.y1 - window.y0) / px));
  if ((long long)g.w * g.h > (1LL << 26))
    fail_budget("enumeration-budget-exceeded", "raster larger than the pixel budget");
  std::vector<std::uint8_t> tracepix((std::size_t)g.w * (std::size_t)g.h, 0);

  auto mark = [&](std::complex<double> p) {
    int ix = (int)std::floor((p.real() - window.x0) / px);
    int iy = (int)std::floor((p.imag() - window.y0) / px);
    if (ix < 0 || ix >= g.w || iy < 0 || iy >= g.h) return;
    tracepix[(std::size_t)iy * (std::size_t)g.w + (std::size_t)ix] = 1;
  };
  for (std::size_t i = 0; i + 1 < t.tips.size(); ++i) {
    std::complex<double> a = t.tips[i], b = t.tips[i + 1];
    double lo_x = std::min(a.real(), b.real()), hi_x = std::max(a.real(), b.real());
    double lo_y = std::min(a.imag(), b.imag()), hi_y = std::max(a.imag(), b.imag());
    if (hi_x < window.x0 - px || lo_x > window.x1 + px || hi_y < window.y0 - px ||
        lo_y > window.y1 + px)
      continue;
    double span = std::max(std::abs(b.real() - a.real()), std::abs(b.imag() - a.imag()));
    long long nsub = std::max((long long)1, (long long)std::ceil(span / (px * 0.5)));
    for (long long s = 0; s <= nsub; ++s)
      mark(a + (b - a) * ((double)s / (double)nsub));
  }
  bool any = false;
  for (auto v : tracepix) any = any || v != 0;
  if (!any) fail_validation("trace-misses-window", "no trace pixel inside the window");

  g.comp.assign((std::size_t)g.w * (std::size_t)g.h, -1);
  int next_id = 0;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      std::size_t idx = (std::size_t)y * (std::size_t)g.w + (std::size_t)x;
      if (tracepix[idx] || g.comp[idx] >= 0) continue;
      int id = next_id++;
      Bubble b;
      b.id = id;
      long long bx0 = x, bx1 = x, by0 = y, by1 = y;
      g.comp[idx] = id;
      queue.emplace_back(x, y);
      while (!queue.empty()) {
        auto [cx, cy] = queue.front();
        queue.pop_front();
        ++b.pixels;
        bx0 = std::min(bx0, (long long)cx);
        bx1 = std::max(bx1, (long long)cx);
        by0 = std::min(by0, (long long)cy);
        by1 = std::max(by1, (long long)cy);
        if (cx == 0 || cx == g.w - 1 || cy == 0 || cy == g.h - 1) b.touches_border = true;
        const int nx[4] = {cx - 1, cx + 1, cx, cx};
        const int ny[4] = {cy, cy, cy - 1, cy + 1};
        for (int d = 0; d < 4; ++d) {
          if (nx[d] < 0 || nx[d] >= g.w || ny[d] < 0 || ny[d] >= g.h) continue;
          std::size_t nidx = (std::size_t)ny[d] * (std::size_t)g.w + (std::size_t)nx[d];
          if (tracepix[nidx] || g.comp[nidx] >= 0) continue;
          g.comp[nidx] = id;
          queue.emplace_back(nx[d], ny[d]);
        }
      }
      b.diameter = (int)std::max(bx1 - bx0, by1 - by0) + 1;
      g.bubbles.push_back(b);
    }

  std::vector<std::pair<int, int>> edges;
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      int c = g.comp[(std::size_t)y * (std::size_t)g.w + (std::size_t)x];
      if (c < 0) continue;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          int qx = x + dx, qy = y + dy;
          if (qx < 0 || qx >= g.w || qy < 0 || qy >= g.h) continue;
          int o = g.comp[(std::size_t)qy * (std::size_t)g.w + (std::size_t)qx];
          if (o >= 0 && o != c) edges.emplace_back(std::min(c, o), std::max(c, o));
        }
    }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.edges = std::move(edges);
  if (!g.bubbles.empty()) {
    detail::UnionFind uf(g.bubbles.size());
    for (const auto& [a, b] : g.edges) uf.unite(a, b);
    int root = uf.find(0);
    for (std::size_t i = 1; i < g.bubbles.size(); ++i)
      if (uf.find((int)i) != root) g.connected = false;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Kappa sweep with coupled seeds: one Brownian motion per trial, scaled by
// sqrt(kappa) per row, identical window and pixel size throughout.
// ---------------------------------------------------------------------------

struct SweepRow {
  double kappa = 0;
  std::vector<std::vector<int>> bulk_diameters;  // per trial: diameters of interior bubbles
  double q50 = 0, q90 = 0, q99 = 0;              // pooled quantiles
  double connected_fraction = 0;
};

inline double sweep_quantile(std::vector<int> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  double pos = q * (double)(v.size() - 1);
  std::size_t lo = (std::size_t)pos;
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - (double)lo;
  return (1.0 - frac) * v[lo] + frac * v[hi];
}

inline std::vector<SweepRow> kappa_sweep(const std::vector<double>& kappas, int trials, double T,
                                         double dt, RealRect window, double px,
                                         std::uint64_t root_seed) {
  if (trials < 1) fail_validation("out-of-range", "need at least one trial");
  std::vector<SweepRow> rows;
  for (double kappa : kappas) {
    SweepRow row;
    row.kappa = kappa;
    row.bulk_diameters.resize((std::size_t)trials);
    int connected = 0;
    std::vector<int> pooled;
    for (int trial = 0; trial < trials; ++trial) {
      DrivingPath d =
          sample_driving(kappa, T, dt, derive_seed(root_seed, "sle", (std::uint64_t)trial));
      TracePolyline t = trace(d);
      BubbleGraph g = bubble_graph(t, window, px);
      auto& out = row.bulk_diameters[(std::size_t)trial];
      for (const auto& b : g.bubbles)
        if (!b.touches_border) out.push_back(b.diameter);
      pooled.insert(pooled.end(), out.begin(), out.end());
      if (g.connected) ++connected;
    }
    row.q50 = sweep_quantile(pooled, 0.50);
    row.q90 = sweep_quantile(pooled, 0.90);
    row.q99 = sweep_quantile(pooled, 0.99);
    row.connected_fraction = (double)connected / (double)trials;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace carpetlab
