#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "carpetlab/rng.hpp"

namespace carpetlab {

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;   // unbiased sample variance
  std::size_t n = 0;
  double stderr_mean() const { return n > 1 ? std::sqrt(var / (double)n) : 0.0; }
};

inline MeanVar mean_var(const std::vector<double>& xs) {
  MeanVar mv;
  mv.n = xs.size();
  if (mv.n == 0) return mv;
  double s = 0.0;
  for (double x : xs) s += x;
  mv.mean = s / (double)mv.n;
  if (mv.n > 1) {
    double q = 0.0;
    for (double x : xs) q += (x - mv.mean) * (x - mv.mean);
    mv.var = q / (double)(mv.n - 1);
  }
  return mv;
}

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  std::size_t n = std::min(x.size(), y.size());
  if (n < 2) return f;
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) { sx += x[i]; sy += y[i]; }
  double mx = sx / (double)n, my = sy / (double)n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

// One bootstrap resample (with replacement) of xs.
inline std::vector<double> bootstrap_resample(const std::vector<double>& xs, StreamRng& rng) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[rng.next_below(xs.size())];
  return out;
}

}  // namespace carpetlab
