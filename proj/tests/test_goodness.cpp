// The goodness recursion, its threshold solver, and the two site classifiers.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "carpetlab/goodness.hpp"

using namespace carpetlab;

namespace {

// Independent oracle for phi: P[Binomial(N^2, px) >= N^2 - 1] summed from
// exact binomial coefficients, no shared code with the closed form.
double phi_oracle(int base, double p, double x) {
  const int n2 = base * base;
  long double q = (long double)p * x;
  auto term = [&](int k) {
    long double c = 1.0L;
    for (int i = 0; i < n2 - k; ++i) c = c * (long double)(n2 - i) / (long double)(i + 1);
    return c * std::pow(q, (long double)k) * std::pow(1.0L - q, (long double)(n2 - k));
  };
  return (double)(term(n2) + term(n2 - 1));
}

// Direct recursive m-good evaluation straight off the marks.
bool good_oracle(const RetentionTree& tree, const BoxAddress& b, int m) {
  if (m == 0) return tree.mark(b);
  int fails = 0;
  for (const auto& c : subdivide(b))
    if (!tree.mark(c) || !good_oracle(tree, c, m - 1)) ++fails;
  return fails <= 1;
}

}  // namespace

TEST_CASE("phi matches the binomial tail oracle") {
  for (int base : {2, 3, 6})
    for (double p : {0.5, 0.9, 0.99, 1.0})
      for (double x : {0.0, 0.3, 0.7, 0.95, 1.0}) {
        double got = phi(base, p, x);
        double want = phi_oracle(base, p, x);
        CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)));
      }
  CHECK_THROWS_AS(phi(1, 0.5, 0.5), error);
  CHECK_THROWS_AS(phi(3, -0.1, 0.5), error);
  CHECK_THROWS_AS(phi(3, 0.5, 1.5), error);
}

TEST_CASE("theta sequence starts at one, stays in [0,1], never increases") {
  for (double p : {0.5, 0.9, 0.999, 0.9999}) {
    auto ts = theta_sequence(6, p, 100);
    REQUIRE(ts.values.size() == 101);
    CHECK(ts.values[0] == 1.0);
    for (std::size_t m = 1; m < ts.values.size(); ++m) {
      CHECK(ts.values[m] >= 0.0);
      CHECK(ts.values[m] <= ts.values[m - 1]);
    }
    CHECK(ts.min_value == ts.values.back());
  }
  CHECK_THROWS_AS(theta_sequence(6, 0.5, -1), error);
}

TEST_CASE("theta fixed point freezes the tail") {
  auto ts = theta_sequence(6, 0.9999, 200);
  REQUIRE(ts.fixed_point_at.has_value());
  int at = *ts.fixed_point_at;
  for (std::size_t m = (std::size_t)at; m < ts.values.size(); ++m)
    CHECK(ts.values[m] == ts.values[(std::size_t)at]);
}

TEST_CASE("threshold solver brackets the 2/3 transition") {
  auto res = p0_threshold(6, 1e-4);
  CHECK(res.p0 > 0.995);
  CHECK(res.p0 < 1.0);
  // Just above: the iteration never dips below 2/3. Just below: it does.
  CHECK(theta_sequence(6, std::min(1.0, res.p0 + 1e-4), 200).min_ge_two_thirds);
  CHECK_FALSE(theta_sequence(6, res.p0 - 1e-2, 200).min_ge_two_thirds);
  // The certified closed-form retention bound is sufficient, hence no smaller.
  CHECK(res.paper_bound >= res.p0 - 1e-3);
  CHECK(res.nu > 0.0);
  CHECK(res.nu < 1.0 / 3.0);
  CHECK_THROWS_AS(p0_threshold(6, 0.0), error);
}

TEST_CASE("goodness table agrees with the direct recursion") {
  for (std::uint64_t seed : {11ull, 22ull, 33ull}) {
    auto tree = RetentionTree::sample({2, 0.8, 3, seed, 12});
    auto table = classify_m_good(tree, 3);
    for (int m = 0; m <= 3; ++m)
      for (int level = 0; level + m <= 3; ++level) {
        long long side = ipow_checked(2, level);
        for (long long i = 0; i < side; ++i)
          for (long long j = 0; j < side; ++j) {
            auto b = make_box(2, level, i, j);
            CHECK(table.is_good(b, m) == good_oracle(tree, b, m));
          }
      }
  }
}

TEST_CASE("m-good implies (m-1)-good for m >= 2") {
  // The implication starts at m = 2: 1-good reads only marks strictly below
  // the box while 0-good is the box's own mark, so those two are independent.
  auto tree = RetentionTree::sample({3, 0.9, 4, 404, 12});
  auto table = classify_m_good(tree, 4);
  auto root = root_box(3);
  for (int m = 1; m <= 4; ++m)  // the root is surely retained, so m = 1 joins in
    if (table.is_good(root, m)) CHECK(table.is_good(root, m - 1));
  for (long long i = 0; i < 3; ++i)
    for (long long j = 0; j < 3; ++j) {
      auto b = make_box(3, 1, i, j);
      for (int m = 2; m <= 3; ++m)
        if (table.is_good(b, m)) CHECK(table.is_good(b, m - 1));
    }
}

TEST_CASE("goodness queries respect budget and depth limits") {
  auto tree = RetentionTree::sample({3, 0.9, 2, 1, 12});
  auto table = classify_m_good(tree, 2);
  CHECK_THROWS_AS(table.is_good(root_box(3), 3), error);
  CHECK_THROWS_AS(table.is_good(root_box(3), -1), error);
  // Deciding 2-good at level 1 needs marks at level 3, past the sampled depth.
  CHECK_THROWS_AS(table.is_good(make_box(3, 1, 0, 0), 2), error);
  CHECK_THROWS_AS(classify_m_good(tree, 3), error);
  CHECK_THROWS_AS(GoodnessTable(tree, -1), error);

  auto labels = table.labels(root_box(3));
  REQUIRE(labels.size() == 3);
  CHECK(labels[0]);  // the root is retained surely
}

TEST_CASE("Monte Carlo root goodness tracks theta") {
  const int trials = 2000;
  const double p = 0.9;
  auto ts = theta_sequence(2, p, 2);
  std::vector<int> hits(3, 0);
  for (int t = 0; t < trials; ++t) {
    auto tree = RetentionTree::sample({2, p, 2, derive_seed(17, "goodness", t), 12});
    auto table = classify_m_good(tree, 2);
    for (int m = 0; m <= 2; ++m)
      if (table.is_good(root_box(2), m)) ++hits[(std::size_t)m];
  }
  for (int m = 0; m <= 2; ++m) {
    double est = (double)hits[(std::size_t)m] / trials;
    double se = std::sqrt(std::max(est * (1.0 - est), 1e-6) / trials);
    CHECK(std::abs(est - ts.values[(std::size_t)m]) <= 5 * se);
  }
}

TEST_CASE("dyadic scales validate their exponent") {
  CHECK_THROWS_AS(make_scale(0), error);
  CHECK_THROWS_AS(make_scale(21), error);
  CHECK_THROWS_AS(make_scale(6), error);  // 1/64 is not finer than 1/100
  CHECK(make_scale(7).value() == Rational(1, 128));
  CHECK(make_scale(3, true).value() == Rational(1, 8));
}

TEST_CASE("site classifier accepts an empty neighborhood") {
  auto eps = make_scale(3, true);
  auto f = make_site_field(eps, 1, -8, 8, -8, 8);
  auto res = classify_mn_good(f, 0, 0);
  CHECK(res.good);
  CHECK(res.components.empty());
  CHECK(res.threshold == Rational(1, 32));  // eps^1 / 4 at eps = 1/8
}

TEST_CASE("site classifier validates lattice and window") {
  auto eps = make_scale(3, true);
  auto f = make_site_field(eps, 1, -8, 8, -8, 8);
  CHECK_THROWS_AS(classify_mn_good(f, 3, 0), error);   // off the level-n lattice
  CHECK_THROWS_AS(classify_mn_good(f, 8, 0), error);   // ball leaves the window
  CHECK_THROWS_AS(make_site_field(eps, 1, 5, 4, 0, 0), error);
  CHECK_THROWS_AS(make_site_field(make_scale(20), 3, 0, 1, 0, 1), error);
}

TEST_CASE("one isolated bad site sits exactly at the diameter bound") {
  // At eps = 1/8, n = 1 a singleton's box has diameter 2 eps^2 = 1/32, equal
  // to the threshold eps/4, so the site stays good with nothing to spare.
  auto eps = make_scale(3, true);
  auto f = make_site_field(eps, 1, -8, 8, -8, 8);
  f.bad[(std::size_t)((0 - f.y_lo) * f.width() + (3 - f.x_lo))] = 1;
  auto res = classify_mn_good(f, 0, 0);
  REQUIRE(res.components.size() == 1);
  CHECK(res.components[0].span == 0);
  CHECK(res.components[0].diameter == Rational(1, 32));
  CHECK(res.components[0].within_bound);
  CHECK(res.good);
}

TEST_CASE("adjacent bad sites merge and break the bound") {
  auto eps = make_scale(3, true);
  auto f = make_site_field(eps, 1, -8, 8, -8, 8);
  auto set_bad = [&](long long x, long long y) {
    f.bad[(std::size_t)((y - f.y_lo) * f.width() + (x - f.x_lo))] = 1;
  };
  set_bad(2, 0);
  set_bad(3, 0);  // span 1: diameter 3/64 > 1/32
  auto res = classify_mn_good(f, 0, 0);
  REQUIRE(res.components.size() == 1);
  CHECK(res.components[0].sites.size() == 2);
  CHECK(res.components[0].diameter == Rational(3, 64));
  CHECK_FALSE(res.good);
}

TEST_CASE("distant bad sites stay in separate components") {
  auto eps = make_scale(3, true);
  auto f = make_site_field(eps, 1, -8, 8, -8, 8);
  auto set_bad = [&](long long x, long long y) {
    f.bad[(std::size_t)((y - f.y_lo) * f.width() + (x - f.x_lo))] = 1;
  };
  set_bad(-4, -4);
  set_bad(4, 4);  // farther than L-inf 2: closed radius-1 boxes stay apart
  auto res = classify_mn_good(f, 0, 0);
  CHECK(res.components.size() == 2);
  CHECK(res.good);

  // Chebyshev distance 2 still connects (closed boxes share a point).
  set_bad(-2, -4);
  auto res2 = classify_mn_good(f, 0, 0);
  CHECK(res2.components.size() == 2);
  bool merged = false;
  for (const auto& c : res2.components) merged = merged || c.sites.size() == 2;
  CHECK(merged);
}
