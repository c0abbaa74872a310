#pragma once
#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "carpetlab/error.hpp"
#include "carpetlab/percolation.hpp"  // detail::UnionFind
#include "carpetlab/rational.hpp"
#include "carpetlab/rng.hpp"

namespace carpetlab {

// ---------------------------------------------------------------------------
// Zero-boundary Gaussian free field on an n x n interior grid; the boundary
// ring just outside [0, n)^2 is pinned to 0. Covariance is the inverse of the
// discrete Dirichlet Laplacian A = 4I - adjacency (unit normalization), and
// samples are drawn exactly through a cached sparse Cholesky factor of A:
// with P A P^T = L L^T, the vector P^T L^-T xi has covariance A^-1.
// ---------------------------------------------------------------------------

struct Window {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive interior coordinates

  int w() const { return x1 - x0 + 1; }
  int h() const { return y1 - y0 + 1; }
  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  friend bool operator==(const Window&, const Window&) = default;
};

inline Window ball_window(int cx, int cy, long long r) {
  return Window{cx - (int)r, cy - (int)r, cx + (int)r, cy + (int)r};
}

struct LatticeField {
  int n = 0;
  std::vector<double> values;  // row-major interior sites

  double at(int x, int y) const {
    if (x < 0 || x >= n || y < 0 || y >= n) return 0.0;
    return values[(std::size_t)y * (std::size_t)n + (std::size_t)x];
  }
};

namespace detail {

// Dirichlet Laplacian of a w x h rectangle, sites row-major.
inline Eigen::SparseMatrix<double> window_laplacian(int w, int h) {
  Eigen::SparseMatrix<double> a(w * h, w * h);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve((std::size_t)w * h * 5);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int i = y * w + x;
      trips.emplace_back(i, i, 4.0);
      if (x > 0) trips.emplace_back(i, i - 1, -1.0);
      if (x + 1 < w) trips.emplace_back(i, i + 1, -1.0);
      if (y > 0) trips.emplace_back(i, i - w, -1.0);
      if (y + 1 < h) trips.emplace_back(i, i + w, -1.0);
    }
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

// Ring sites of a w x h window, in a fixed scan order, each paired with the
// unique window site it is 4-adjacent to (offsets relative to the window).
struct RingSite {
  int rx, ry;      // ring position, may be -1 or w/h
  int inner;       // row-major index of the adjacent window site
};

inline std::vector<RingSite> ring_sites(int w, int h) {
  std::vector<RingSite> ring;
  for (int y = -1; y <= h; ++y)
    for (int x = -1; x <= w; ++x) {
      bool on_ring = (x == -1 || x == w || y == -1 || y == h);
      if (!on_ring || ((x == -1 || x == w) && (y == -1 || y == h))) continue;
      int ix = std::clamp(x, 0, w - 1), iy = std::clamp(y, 0, h - 1);
      ring.push_back(RingSite{x, y, iy * w + ix});
    }
  return ring;
}

struct WindowSolver {
  int w = 0, h = 0;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
  std::vector<RingSite> ring;
  Eigen::MatrixXd kernel;  // sites x ring, only for small windows
  bool has_kernel = false;
};

inline const WindowSolver& window_solver(int w, int h) {
  static std::map<std::pair<int, int>, std::unique_ptr<WindowSolver>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{w, h}];
  if (!slot) {
    auto s = std::make_unique<WindowSolver>();
    s->w = w;
    s->h = h;
    s->llt.compute(window_laplacian(w, h));
    check(s->llt.info() == Eigen::Success, "factorization-failed",
          "window Laplacian factorization failed");
    s->ring = ring_sites(w, h);
    const long long sites = (long long)w * h;
    if (sites <= 2048) {
      s->kernel.resize(sites, (long long)s->ring.size());
      Eigen::VectorXd b(sites);
      for (std::size_t k = 0; k < s->ring.size(); ++k) {
        b.setZero();
        b[s->ring[k].inner] = 1.0;
        s->kernel.col((long long)k) = s->llt.solve(b);
      }
      s->has_kernel = true;
    }
    slot = std::move(s);
  }
  return *slot;
}

// Harmonic extension into the window of the data read just outside it.
template <class FieldAt>
inline Eigen::VectorXd harmonic_extension(const FieldAt& at, Window win) {
  const WindowSolver& s = window_solver(win.w(), win.h());
  if (s.has_kernel) {
    Eigen::VectorXd ring((long long)s.ring.size());
    for (std::size_t k = 0; k < s.ring.size(); ++k)
      ring[(long long)k] = at(win.x0 + s.ring[k].rx, win.y0 + s.ring[k].ry);
    return s.kernel * ring;
  }
  Eigen::VectorXd b(win.w() * win.h());
  b.setZero();
  for (const auto& r : s.ring) b[r.inner] += at(win.x0 + r.rx, win.y0 + r.ry);
  return s.llt.solve(b);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sampling.
// ---------------------------------------------------------------------------

inline LatticeField sample_field(int n, std::uint64_t seed, int cap = 128) {
  if (n < 1) fail_validation("out-of-range", "grid size must be >= 1");
  if (n > cap)
    fail_validation("grid-too-large",
                    "grid " + std::to_string(n) + " exceeds cap " + std::to_string(cap));
  static std::map<int, std::unique_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>> cache;
  static std::mutex mu;
  const Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>* llt = nullptr;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[n];
    if (!slot) {
      slot = std::make_unique<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
      slot->compute(detail::window_laplacian(n, n));
      check(slot->info() == Eigen::Success, "factorization-failed",
            "grid Laplacian factorization failed");
    }
    llt = slot.get();
  }
  StreamRng rng(seed);
  Eigen::VectorXd xi((long long)n * n);
  for (long long i = 0; i < xi.size(); ++i) xi[i] = rng.next_gaussian();
  Eigen::VectorXd x = llt->permutationPinv() * llt->matrixU().solve(xi);
  LatticeField f;
  f.n = n;
  f.values.assign(x.data(), x.data() + x.size());
  return f;
}

// Exact covariance A^-1 for test oracles; dense, so keep n small.
inline Eigen::MatrixXd green_matrix(int n) {
  const auto& s = detail::window_solver(n, n);
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n * n, n * n);
  return s.llt.solve(id);
}

// ---------------------------------------------------------------------------
// Harmonic split on a window: harmonic part = extension of the field values
// on the ring just outside; remainder = field - harmonic inside the window
// and exactly 0 everywhere else. Matches the decomposition h = h^(y,s) + ring
// of a zero-boundary piece that is independent of the field outside.
// ---------------------------------------------------------------------------

struct HarmonicSplit {
  Window window;
  std::vector<double> harmonic;   // (w+2) x (h+2) closed region, ring = field data
  std::vector<double> remainder;  // w x h, open window only

  double harmonic_at(int x, int y) const {
    int lx = x - window.x0 + 1, ly = y - window.y0 + 1;
    return harmonic[(std::size_t)ly * (std::size_t)(window.w() + 2) + (std::size_t)lx];
  }
  double remainder_at(int x, int y) const {
    if (!window.contains(x, y)) return 0.0;
    return remainder[(std::size_t)(y - window.y0) * (std::size_t)window.w() +
                     (std::size_t)(x - window.x0)];
  }
};

namespace detail {

template <class FieldAt>
inline HarmonicSplit harmonic_split_core(const FieldAt& at, int n, Window win) {
  if (win.x0 > win.x1 || win.y0 > win.y1)
    fail_validation("out-of-range", "window is empty");
  if (win.x0 < 1 || win.y0 < 1 || win.x1 > n - 2 || win.y1 > n - 2)
    fail_validation("window-at-boundary", "window must sit strictly inside the grid");
  HarmonicSplit s;
  s.window = win;
  const int w = win.w(), h = win.h();
  Eigen::VectorXd phi = harmonic_extension(at, win);
  s.harmonic.assign((std::size_t)(w + 2) * (std::size_t)(h + 2), 0.0);
  s.remainder.assign((std::size_t)w * (std::size_t)h, 0.0);
  for (int y = -1; y <= h; ++y)
    for (int x = -1; x <= w; ++x) {
      std::size_t idx = (std::size_t)(y + 1) * (std::size_t)(w + 2) + (std::size_t)(x + 1);
      if (x >= 0 && x < w && y >= 0 && y < h) {
        s.harmonic[idx] = phi[y * w + x];
        s.remainder[(std::size_t)y * (std::size_t)w + (std::size_t)x] =
            at(win.x0 + x, win.y0 + y) - phi[y * w + x];
      } else {
        s.harmonic[idx] = at(win.x0 + x, win.y0 + y);
      }
    }
  return s;
}

}  // namespace detail

inline HarmonicSplit harmonic_split(const LatticeField& f, Window win) {
  return detail::harmonic_split_core([&](int x, int y) { return f.at(x, y); }, f.n, win);
}

// Split of a previous split's remainder (the zero-boundary piece), used by the
// multiscale decomposition and the vertex classifier.
inline HarmonicSplit harmonic_split(const HarmonicSplit& outer, int n, Window win) {
  return detail::harmonic_split_core([&](int x, int y) { return outer.remainder_at(x, y); }, n,
                                     win);
}

// Max deviation from the discrete mean-value property over the open window of
// a closed-region array; exact harmonic extensions sit at roundoff.
inline double harmonic_defect(const std::vector<double>& region, int w, int h) {
  double worst = 0.0;
  for (int y = 1; y <= h; ++y)
    for (int x = 1; x <= w; ++x) {
      double c = region[(std::size_t)y * (std::size_t)(w + 2) + (std::size_t)x];
      double s = region[(std::size_t)y * (std::size_t)(w + 2) + (std::size_t)(x - 1)] +
                 region[(std::size_t)y * (std::size_t)(w + 2) + (std::size_t)(x + 1)] +
                 region[(std::size_t)(y - 1) * (std::size_t)(w + 2) + (std::size_t)x] +
                 region[(std::size_t)(y + 1) * (std::size_t)(w + 2) + (std::size_t)x];
      worst = std::max(worst, std::abs(4.0 * c - s));
    }
  return worst;
}

// Fluctuation statistic: max - min of the harmonic part over the concentric
// half-radius ball. One small solve per call; the tail tests lean on this.
inline double half_window_fluctuation(const LatticeField& f, int cx, int cy, long long r) {
  HarmonicSplit s = harmonic_split(f, ball_window(cx, cy, r));
  long long hr = r / 2;
  double lo = s.harmonic_at(cx, cy), hi = lo;
  for (long long dy = -hr; dy <= hr; ++dy)
    for (long long dx = -hr; dx <= hr; ++dx) {
      double v = s.harmonic_at(cx + (int)dx, cy + (int)dy);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  return hi - lo;
}

// ---------------------------------------------------------------------------
// Multiscale decomposition around a site z with scales a_m = rho N^m:
//   h^(z,2rho) = h^(z,2rho)_(z1,4a1) + sum_m h^(zm,4am)_(zm+1,4am+1) + h^(zmb,4amb)
// where z_m rounds z to the a_m lattice. Each piece is evaluated on the
// closed region of the innermost window and the telescoping identity is
// checked site by site.
// ---------------------------------------------------------------------------

struct Multiscale {
  Window inner;  // B(z, 2 rho)
  std::vector<std::array<int, 2>> centers;        // z_1 .. z_mbar
  std::vector<std::vector<double>> pieces;        // level 0..mbar on inner closed region
  std::vector<double> full;                       // h^(z,2rho) on the same region
  double max_error = 0;                           // reconstruction defect
};

inline Multiscale multiscale_decompose(const LatticeField& f, int zx, int zy, long long rho,
                                       int base, int levels) {
  if (rho < 1) fail_validation("out-of-range", "rho must be >= 1");
  if (base < 2) fail_validation("unsupported-base", "scale base must be >= 2");
  if (levels < 1) fail_validation("out-of-range", "need at least one scale level");
  std::vector<long long> a((std::size_t)levels + 1);
  a[0] = rho;
  for (int m = 1; m <= levels; ++m) a[(std::size_t)m] = rho * ipow_checked(base, m);

  auto round_to = [](int v, long long g) {
    long long q = (long long)std::llround(std::floor((double)v / (double)g + 0.5));
    return (int)(q * g);
  };
  std::vector<std::array<int, 2>> centers;
  centers.push_back({zx, zy});  // level 0 = z itself
  for (int m = 1; m <= levels; ++m)
    centers.push_back({round_to(zx, a[(std::size_t)m]), round_to(zy, a[(std::size_t)m])});

  // nesting on the actual centers: B(z,2rho) in B(z1,2a1), B(zm,4am) in B(zm+1,2am+1)
  auto gap = [&](int m1, int m2) {
    return std::max(std::abs(centers[(std::size_t)m1][0] - centers[(std::size_t)m2][0]),
                    std::abs(centers[(std::size_t)m1][1] - centers[(std::size_t)m2][1]));
  };
  if (gap(0, 1) + 2 * rho > 2 * a[1])
    fail_validation("scale-nesting-violated", "B(z,2rho) escapes B(z1,2a1)");
  for (int m = 1; m < levels; ++m)
    if (gap(m, m + 1) + 4 * a[(std::size_t)m] > 2 * a[(std::size_t)m + 1])
      fail_validation("scale-nesting-violated",
                      "B(z" + std::to_string(m) + ",4a) escapes the next scale");

  Multiscale ms;
  ms.inner = ball_window(zx, zy, 2 * rho);
  for (int m = 1; m <= levels; ++m) ms.centers.push_back(centers[(std::size_t)m]);

  // peel from the outside in: split the field at the outermost window, then
  // split each remainder at the next window down
  std::vector<HarmonicSplit> splits((std::size_t)levels + 1);
  splits[(std::size_t)levels] = harmonic_split(
      f, ball_window(centers[(std::size_t)levels][0], centers[(std::size_t)levels][1],
                     4 * a[(std::size_t)levels]));
  for (int m = levels - 1; m >= 1; --m)
    splits[(std::size_t)m] = harmonic_split(
        splits[(std::size_t)m + 1], f.n,
        ball_window(centers[(std::size_t)m][0], centers[(std::size_t)m][1],
                    4 * a[(std::size_t)m]));
  splits[0] = harmonic_split(splits[1], f.n, ms.inner);

  HarmonicSplit full = harmonic_split(f, ms.inner);
  const int rw = ms.inner.w() + 2, rh = ms.inner.h() + 2;
  ms.full.assign((std::size_t)rw * (std::size_t)rh, 0.0);
  ms.pieces.assign((std::size_t)levels + 1,
                   std::vector<double>((std::size_t)rw * (std::size_t)rh, 0.0));
  for (int y = 0; y < rh; ++y)
    for (int x = 0; x < rw; ++x) {
      int ax = ms.inner.x0 - 1 + x, ay = ms.inner.y0 - 1 + y;
      std::size_t idx = (std::size_t)y * (std::size_t)rw + (std::size_t)x;
      ms.full[idx] = full.harmonic_at(ax, ay);
      double sum = 0;
      for (int m = 0; m <= levels; ++m) {
        double v = splits[(std::size_t)m].harmonic_at(ax, ay);
        ms.pieces[(std::size_t)m][idx] = v;
        sum += v;
      }
      ms.max_error = std::max(ms.max_error, std::abs(ms.full[idx] - sum));
    }
  return ms;
}

// ---------------------------------------------------------------------------
// Nice/bad vertex hierarchy. An a_1-vertex x is nice when every unit-scale
// window B(y,2rho) inside B(x,4a_1) has harmonic-part fluctuation <= M on the
// concentric 3rho/2 ball. An a_j-vertex is nice when (i) the level-(j-1)
// pieces inside B(x,4a_j) fluctuate by at most N^((j-1)/2) M on their 3a_(j-1)
// balls, and the bad a_(j-1)-vertices in B(x,a_j) are either absent (ii) or
// jointly covered by one ball B(z,10a_(j-1)) (iii). The fluctuation suprema
// are M-independent, so they are computed once and thresholded per M.
// ---------------------------------------------------------------------------

struct NiceStats {
  int base = 0;
  long long rho = 1;
  int levels = 0;
  int n = 0;
  std::vector<long long> spacing;                              // a_j, j = 1..levels
  std::vector<std::vector<std::array<int, 2>>> vertices;       // per level
  std::vector<std::vector<double>> sup;                        // raw fluctuation suprema
};

inline NiceStats compute_nice_stats(const LatticeField& f, int base, long long rho, int levels) {
  if (base < 2) fail_validation("unsupported-base", "scale base must be >= 2");
  if (rho < 1) fail_validation("out-of-range", "rho must be >= 1");
  if (levels < 1) fail_validation("out-of-range", "need at least one level");
  NiceStats st;
  st.base = base;
  st.rho = rho;
  st.levels = levels;
  st.n = f.n;
  for (int j = 1; j <= levels; ++j) st.spacing.push_back(rho * ipow_checked(base, j));
  st.vertices.resize((std::size_t)levels);
  st.sup.resize((std::size_t)levels);

  for (int j = 1; j <= levels; ++j) {
    long long aj = st.spacing[(std::size_t)j - 1];
    long long prev = j == 1 ? rho : st.spacing[(std::size_t)j - 2];
    long long lo = 4 * aj + 1, hi = f.n - 2 - 4 * aj;
    std::vector<std::array<int, 2>>& verts = st.vertices[(std::size_t)j - 1];
    for (long long x = ((lo + aj - 1) / aj) * aj; x <= hi; x += aj)
      for (long long y = ((lo + aj - 1) / aj) * aj; y <= hi; y += aj)
        verts.push_back({(int)x, (int)y});
    if (verts.empty())
      fail_validation("field-window-too-small",
                      "no level-" + std::to_string(j) + " vertex window fits the grid");
    // inner sub-window placement: B(y, sub_r) must stay inside B(x, 4 a_j)
    long long sub_r = j == 1 ? 2 * rho : 4 * prev;
    long long stat_r = j == 1 ? (3 * rho) / 2 : 3 * prev;
    long long span = 4 * aj - sub_r;
    long long step = j == 1 ? 1 : prev;
    for (const auto& v : verts) {
      HarmonicSplit big = harmonic_split(f, ball_window(v[0], v[1], 4 * aj));
      double worst = 0;
      for (long long yy = -span; yy <= span; yy += step)
        for (long long xx = -span; xx <= span; xx += step) {
          if (j >= 2) {
            // sub-centers live on the a_(j-1) lattice in absolute coordinates
            if (((v[0] + xx) % prev + prev) % prev != 0 ||
                ((v[1] + yy) % prev + prev) % prev != 0)
              continue;
          }
          HarmonicSplit sub =
              harmonic_split(big, f.n, ball_window(v[0] + (int)xx, v[1] + (int)yy, sub_r));
          double lo_v = sub.harmonic_at(v[0] + (int)xx, v[1] + (int)yy), hi_v = lo_v;
          for (long long dy = -stat_r; dy <= stat_r; ++dy)
            for (long long dx = -stat_r; dx <= stat_r; ++dx) {
              double val = sub.harmonic_at(v[0] + (int)(xx + dx), v[1] + (int)(yy + dy));
              lo_v = std::min(lo_v, val);
              hi_v = std::max(hi_v, val);
            }
          worst = std::max(worst, hi_v - lo_v);
        }
      st.sup[(std::size_t)j - 1].push_back(worst);
    }
  }
  return st;
}

struct NiceTable {
  int base = 0;
  long long rho = 1;
  int levels = 0;
  int n = 0;
  double m_threshold = 0;
  std::vector<std::vector<std::array<int, 2>>> vertices;
  std::vector<std::vector<std::uint8_t>> nice;
  std::vector<double> bad_fraction;     // per level
  std::vector<int> cover_rescues;      // level j >= 2 vertices saved by the covering clause
  bool cover_restriction_bound = false;  // covering center found only beyond 20 a_(j-1)
};

inline NiceTable label_nice(const NiceStats& st, double m_threshold) {
  if (!(m_threshold >= 0)) fail_validation("out-of-range", "threshold must be >= 0");
  NiceTable t;
  t.base = st.base;
  t.rho = st.rho;
  t.levels = st.levels;
  t.n = st.n;
  t.m_threshold = m_threshold;
  t.vertices = st.vertices;
  t.nice.resize((std::size_t)st.levels);
  t.cover_rescues.assign((std::size_t)st.levels, 0);

  for (int j = 1; j <= st.levels; ++j) {
    const auto& verts = st.vertices[(std::size_t)j - 1];
    auto& labels = t.nice[(std::size_t)j - 1];
    labels.assign(verts.size(), 0);
    double bound = std::pow((double)st.base, (j - 1) / 2.0) * m_threshold;
    long long aj = st.spacing[(std::size_t)j - 1];
    if (j == 1) {
      for (std::size_t i = 0; i < verts.size(); ++i)
        labels[i] = st.sup[0][i] <= bound ? 1 : 0;
    } else {
      long long prev = st.spacing[(std::size_t)j - 2];
      const auto& sub_verts = st.vertices[(std::size_t)j - 2];
      const auto& sub_labels = t.nice[(std::size_t)j - 2];
      for (std::size_t i = 0; i < verts.size(); ++i) {
        if (st.sup[(std::size_t)j - 1][i] > bound) continue;  // clause (i) fails
        std::vector<std::array<int, 2>> bad;
        for (std::size_t s = 0; s < sub_verts.size(); ++s) {
          if (std::max(std::abs(sub_verts[s][0] - verts[i][0]),
                       std::abs(sub_verts[s][1] - verts[i][1])) > aj)
            continue;
          if (!sub_labels[s]) bad.push_back(sub_verts[s]);
        }
        if (bad.empty()) {
          labels[i] = 1;
          continue;
        }
        // clause (iii): one ball B(z,10a_(j-1)) covering every bad sub-window,
        // i.e. |y - z|_inf <= 6 a_(j-1) for all bad y; search the whole grid
        // lattice and note when only a center beyond 20 a_(j-1) would work
        bool found_near = false, found_far = false;
        for (long long zx = 0; zx < st.n && !found_near; zx += prev)
          for (long long zy = 0; zy < st.n && !found_near; zy += prev) {
            long long worst = 0;
            for (const auto& b : bad)
              worst = std::max(worst, (long long)std::max(std::abs(b[0] - (int)zx),
                                                          std::abs(b[1] - (int)zy)));
            if (worst > 6 * prev) continue;
            if (worst <= 20 * prev)
              found_near = true;
            else
              found_far = true;
          }
        if (found_near || found_far) {
          labels[i] = 1;
          t.cover_rescues[(std::size_t)j - 1] += 1;
          if (!found_near && found_far) t.cover_restriction_bound = true;
        }
      }
    }
  }
  t.bad_fraction.resize((std::size_t)st.levels, 0.0);
  for (int j = 0; j < st.levels; ++j) {
    std::size_t bad = 0;
    for (auto v : t.nice[(std::size_t)j]) bad += v ? 0 : 1;
    t.bad_fraction[(std::size_t)j] =
        t.nice[(std::size_t)j].empty() ? 0.0 : (double)bad / (double)t.nice[(std::size_t)j].size();
  }
  return t;
}

inline NiceTable classify_nice(const LatticeField& f, int base, long long rho, double m_threshold,
                               int levels) {
  return label_nice(compute_nice_stats(f, base, rho, levels), m_threshold);
}

// ---------------------------------------------------------------------------
// Component harness: union of closed unit boxes over flagged sites (corner
// contact connects), exact max component diameter against iota * R.
// ---------------------------------------------------------------------------

struct HarnessResult {
  long long max_diameter = 0;  // L-inf diameter of the largest box-union component
  bool pass = true;
  std::vector<std::array<long long, 2>> worst_component;
};

inline HarnessResult component_harness(const std::vector<std::array<long long, 2>>& bad_sites,
                                       double iota, long long R) {
  HarnessResult res;
  if (bad_sites.empty()) return res;
  const std::size_t n = bad_sites.size();
  detail::UnionFind uf(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      long long dx = std::llabs(bad_sites[i][0] - bad_sites[j][0]);
      long long dy = std::llabs(bad_sites[i][1] - bad_sites[j][1]);
      if (dx <= 2 && dy <= 2) uf.unite((int)i, (int)j);
    }
  struct Extent {
    long long x0 = 0, x1 = 0, y0 = 0, y1 = 0;
    bool init = false;
  };
  std::map<std::size_t, Extent> ext;
  for (std::size_t i = 0; i < n; ++i) {
    Extent& e = ext[(std::size_t)uf.find((int)i)];
    if (!e.init) {
      e = Extent{bad_sites[i][0], bad_sites[i][0], bad_sites[i][1], bad_sites[i][1], true};
    } else {
      e.x0 = std::min(e.x0, bad_sites[i][0]);
      e.x1 = std::max(e.x1, bad_sites[i][0]);
      e.y0 = std::min(e.y0, bad_sites[i][1]);
      e.y1 = std::max(e.y1, bad_sites[i][1]);
    }
  }
  std::size_t worst_root = 0;
  for (const auto& [root, e] : ext) {
    long long diam = std::max(e.x1 - e.x0, e.y1 - e.y0) + 2;  // unit boxes pad each side
    if (diam > res.max_diameter) {
      res.max_diameter = diam;
      worst_root = root;
    }
  }
  res.pass = (double)res.max_diameter <= iota * (double)R;
  for (std::size_t i = 0; i < n; ++i)
    if ((std::size_t)uf.find((int)i) == worst_root) res.worst_component.push_back(bad_sites[i]);
  return res;
}

}  // namespace carpetlab
