#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "carpetlab/gff.hpp"
#include "carpetlab/rng.hpp"

using namespace carpetlab;

namespace {

// Spectral Green matrix for the n x n Dirichlet Laplacian: the sine basis
// v_jk(x,y) = sin(j pi (x+1)/(n+1)) sin(k pi (y+1)/(n+1)) diagonalizes A with
// eigenvalue 4 - 2cos(j pi/(n+1)) - 2cos(k pi/(n+1)), and the squared norm of
// each eigenvector is ((n+1)/2)^2.
Eigen::MatrixXd green_oracle(int n) {
  const double pi = std::numbers::pi;
  const int s = n * n;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(s, s);
  for (int j = 1; j <= n; ++j)
    for (int k = 1; k <= n; ++k) {
      double lam = 4.0 - 2.0 * std::cos(j * pi / (n + 1)) - 2.0 * std::cos(k * pi / (n + 1));
      Eigen::VectorXd v(s);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          v[y * n + x] =
              std::sin(j * pi * (x + 1) / (n + 1)) * std::sin(k * pi * (y + 1) / (n + 1));
      g += (v * v.transpose()) / (lam * std::pow((n + 1) / 2.0, 2));
    }
  return g;
}

LatticeField zero_field(int n) {
  LatticeField f;
  f.n = n;
  f.values.assign((std::size_t)n * (std::size_t)n, 0.0);
  return f;
}

}  // namespace

TEST_CASE("field sampling validates and is seed-deterministic") {
  CHECK_THROWS_AS(sample_field(0, 1), error);
  CHECK_THROWS_AS(sample_field(-3, 1), error);
  try {
    sample_field(129, 1);
    FAIL("cap not enforced");
  } catch (const error& e) {
    CHECK(e.kind() == errc::validation);
    CHECK(e.code() == "grid-too-large");
  }
  CHECK_THROWS_AS(sample_field(40, 1, 32), error);
  CHECK_NOTHROW(sample_field(40, 1, 64));

  auto a = sample_field(9, 77);
  auto b = sample_field(9, 77);
  auto c = sample_field(9, 78);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);

  // One interior site: A = [4], so the sample is exactly xi / 2.
  auto single = sample_field(1, 12345);
  StreamRng rng(12345);
  CHECK_THAT(single.values[0], Catch::Matchers::WithinAbs(rng.next_gaussian() / 2.0, 1e-15));
  CHECK(single.at(0, 0) == single.values[0]);
  CHECK(single.at(-1, 0) == 0.0);
  CHECK(single.at(0, 1) == 0.0);
}

TEST_CASE("green matrix matches the sine-basis spectral oracle") {
  for (int n : {1, 2, 3, 5}) {
    Eigen::MatrixXd g = green_matrix(n);
    Eigen::MatrixXd oracle = green_oracle(n);
    REQUIRE(g.rows() == n * n);
    CHECK((g - oracle).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THAT(green_matrix(1)(0, 0), Catch::Matchers::WithinAbs(0.25, 1e-15));
}

TEST_CASE("sampled covariance agrees with the green matrix") {
  const int n = 3;
  const int trials = 60000;
  Eigen::MatrixXd g = green_matrix(n);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n * n, n * n);
  for (int t = 0; t < trials; ++t) {
    auto f = sample_field(n, 5000 + (std::uint64_t)t);
    Eigen::Map<const Eigen::VectorXd> v(f.values.data(), n * n);
    acc += v * v.transpose();
  }
  acc /= (double)trials;
  for (int i = 0; i < n * n; ++i)
    for (int j = 0; j < n * n; ++j) {
      double se = std::sqrt((g(i, i) * g(j, j) + g(i, j) * g(i, j)) / trials);
      CHECK(std::abs(acc(i, j) - g(i, j)) <= 5.0 * se);
    }
}

TEST_CASE("harmonic split reconstructs the field and is harmonic inside") {
  auto f = sample_field(33, 4242);
  Window win{8, 9, 20, 18};
  auto s = harmonic_split(f, win);

  CHECK(s.window == win);
  CHECK(harmonic_defect(s.harmonic, win.w(), win.h()) < 1e-10);
  for (int y = win.y0; y <= win.y1; ++y)
    for (int x = win.x0; x <= win.x1; ++x)
      CHECK_THAT(s.harmonic_at(x, y) + s.remainder_at(x, y),
                 Catch::Matchers::WithinAbs(f.at(x, y), 1e-12));
  // The closed-region ring carries the raw field data.
  for (int x = win.x0 - 1; x <= win.x1 + 1; ++x) {
    CHECK(s.harmonic_at(x, win.y0 - 1) == f.at(x, win.y0 - 1));
    CHECK(s.harmonic_at(x, win.y1 + 1) == f.at(x, win.y1 + 1));
  }
  CHECK(s.remainder_at(win.x0 - 1, win.y0) == 0.0);
  CHECK(s.remainder_at(0, 0) == 0.0);

  // Splitting the zero-boundary remainder again telescopes the same way.
  Window inner{11, 11, 16, 15};
  auto s2 = harmonic_split(s, f.n, inner);
  CHECK(harmonic_defect(s2.harmonic, inner.w(), inner.h()) < 1e-10);
  for (int y = inner.y0; y <= inner.y1; ++y)
    for (int x = inner.x0; x <= inner.x1; ++x)
      CHECK_THAT(s2.harmonic_at(x, y) + s2.remainder_at(x, y),
                 Catch::Matchers::WithinAbs(s.remainder_at(x, y), 1e-12));
}

TEST_CASE("window validation rejects empty and boundary-touching windows") {
  auto f = sample_field(17, 9);
  CHECK_THROWS_AS(harmonic_split(f, Window{5, 5, 4, 9}), error);
  try {
    harmonic_split(f, Window{0, 3, 6, 9});
    FAIL("boundary window accepted");
  } catch (const error& e) {
    CHECK(e.code() == "window-at-boundary");
  }
  CHECK_THROWS_AS(harmonic_split(f, Window{3, 3, 16, 9}), error);
  CHECK_THROWS_AS(harmonic_split(f, Window{3, 0, 6, 9}), error);
  CHECK_NOTHROW(harmonic_split(f, Window{1, 1, 15, 15}));
}

TEST_CASE("half-window fluctuation is zero on zero data and scales linearly") {
  auto z = zero_field(21);
  CHECK(half_window_fluctuation(z, 10, 10, 6) == 0.0);

  auto f = sample_field(21, 31);
  double base_val = half_window_fluctuation(f, 10, 10, 6);
  CHECK(base_val > 0.0);
  LatticeField doubled = f;
  for (auto& v : doubled.values) v *= 2.0;
  CHECK_THAT(half_window_fluctuation(doubled, 10, 10, 6),
             Catch::Matchers::WithinRel(2.0 * base_val, 1e-12));
}

TEST_CASE("multiscale decomposition telescopes to the window harmonic part") {
  auto f = sample_field(99, 606);
  auto ms = multiscale_decompose(f, 49, 49, 1, 3, 2);
  CHECK(ms.centers.size() == 2);
  CHECK(ms.pieces.size() == 3);
  CHECK(ms.max_error < 1e-8);

  // The reassembled target is the plain harmonic part on the same region.
  auto direct = harmonic_split(f, ball_window(49, 49, 2));
  const int rw = ms.inner.w() + 2;
  for (int y = -1; y <= ms.inner.h(); ++y)
    for (int x = -1; x <= ms.inner.w(); ++x) {
      double got = ms.full[(std::size_t)(y + 1) * (std::size_t)rw + (std::size_t)(x + 1)];
      CHECK_THAT(got, Catch::Matchers::WithinAbs(
                          direct.harmonic_at(ms.inner.x0 + x, ms.inner.y0 + y), 1e-12));
    }

  CHECK_THROWS_AS(multiscale_decompose(f, 49, 49, 0, 3, 2), error);
  CHECK_THROWS_AS(multiscale_decompose(f, 49, 49, 1, 1, 2), error);
  CHECK_THROWS_AS(multiscale_decompose(f, 49, 49, 1, 3, 0), error);
  // Base 2 cannot nest B(z_m, 4a_m) inside B(z_(m+1), 2a_(m+1)) once the
  // rounded centers disagree.
  try {
    multiscale_decompose(f, 65, 65, 1, 2, 2);
    FAIL("nesting accepted");
  } catch (const error& e) {
    CHECK(e.code() == "scale-nesting-violated");
  }
}

TEST_CASE("nice stats lay out vertex lattices and positive suprema") {
  auto f = sample_field(24, 1717);
  auto st = compute_nice_stats(f, 2, 1, 1);
  REQUIRE(st.vertices.size() == 1);
  CHECK(st.spacing == std::vector<long long>{2});
  // a_1 = 2 vertices on the even lattice with B(x, 8) strictly inside: the
  // window may reach the last interior column n - 2 = 22.
  for (const auto& v : st.vertices[0]) {
    CHECK(v[0] % 2 == 0);
    CHECK(v[0] - 8 >= 1);
    CHECK(v[0] + 8 <= 22);
  }
  CHECK(st.vertices[0].size() == 9);
  for (double s : st.sup[0]) CHECK(s > 0.0);
  CHECK_THROWS_AS(compute_nice_stats(f, 2, 1, 3), error);  // no level-3 window fits
}

TEST_CASE("nice labels threshold the suprema and respect the cover clause") {
  // Synthetic stats: one level-2 vertex at (32,32) with four level-1
  // sub-vertices inside B(x, a_2); suprema pin exactly which are bad.
  NiceStats st;
  st.base = 4;
  st.rho = 1;
  st.levels = 2;
  st.n = 200;
  st.spacing = {4, 16};
  st.vertices.resize(2);
  st.sup.resize(2);
  st.vertices[1].push_back({32, 32});
  st.sup[1].push_back(0.5);  // below 2M for M = 1
  auto add_sub = [&](int x, int y, double sup) {
    st.vertices[0].push_back({x, y});
    st.sup[0].push_back(sup);
  };

  SECTION("all sub-vertices nice") {
    add_sub(24, 24, 0.5);
    add_sub(40, 40, 0.5);
    auto t = label_nice(st, 1.0);
    CHECK(t.nice[0] == std::vector<std::uint8_t>{1, 1});
    CHECK(t.nice[1] == std::vector<std::uint8_t>{1});
    CHECK(t.cover_rescues[1] == 0);
    CHECK(t.bad_fraction == std::vector<double>{0.0, 0.0});
  }

  SECTION("clustered bad sub-vertices are rescued by one covering ball") {
    add_sub(24, 24, 3.0);
    add_sub(28, 28, 3.0);
    add_sub(40, 40, 0.5);
    auto t = label_nice(st, 1.0);
    CHECK(t.nice[0] == std::vector<std::uint8_t>{0, 0, 1});
    CHECK(t.nice[1] == std::vector<std::uint8_t>{1});
    CHECK(t.cover_rescues[1] == 1);
    // any covering center is automatically within 6 a_1 of every bad box,
    // so the bounded-search flag can never fire
    CHECK_FALSE(t.cover_restriction_bound);
    CHECK_THAT(t.bad_fraction[0], Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
  }

  SECTION("bad sub-vertices too spread out for any ball") {
    // Base 4 cannot produce this: any bad set inside B(x, a_2) has diameter
    // at most 2 a_2 = 8 a_1 < 12 a_1, so a cover always exists. Base 8 can.
    st.base = 8;
    st.spacing = {8, 64};
    st.vertices[1][0] = {64, 64};
    add_sub(8, 8, 3.0);
    add_sub(120, 120, 3.0);  // 112 apart > 12 a_1 = 96, no center reaches both
    // a vertex outside B(x, a_2) never counts against x
    add_sub(160, 160, 3.0);
    auto t = label_nice(st, 1.0);
    CHECK(t.nice[1] == std::vector<std::uint8_t>{0});
    CHECK(t.cover_rescues[1] == 0);
    CHECK(t.bad_fraction[1] == 1.0);
  }

  SECTION("clause (i) failure cannot be rescued") {
    st.sup[1][0] = 5.0;  // above 2M
    add_sub(24, 24, 0.5);
    auto t = label_nice(st, 1.0);
    CHECK(t.nice[1] == std::vector<std::uint8_t>{0});
  }

  CHECK_THROWS_AS(label_nice(st, -1.0), error);
}

TEST_CASE("bad fraction is nonincreasing in the threshold on a sampled field") {
  auto f = sample_field(90, 2024);
  auto st = compute_nice_stats(f, 3, 1, 2);
  REQUIRE(st.vertices[1].size() >= 1);
  std::vector<double> last0(1, 1.0), last1(1, 1.0);
  std::vector<std::vector<std::uint8_t>> prev;
  double prev_m = -1;
  for (double m : {0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 1e9}) {
    auto t = classify_nice(f, 3, 1, m, 2) , u = label_nice(st, m);
    CHECK(t.nice == u.nice);  // the convenience wrapper is the same pipeline
    if (!prev.empty()) {
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < u.nice[j].size(); ++i)
          CHECK(u.nice[j][i] >= prev[j][i]);  // nice set grows with M
    }
    prev = u.nice;
    prev_m = m;
  }
  auto loose = label_nice(st, 1e9);
  CHECK(loose.bad_fraction == std::vector<double>{0.0, 0.0});
  auto strict = label_nice(st, 0.0);
  CHECK(strict.bad_fraction[0] == 1.0);
}

TEST_CASE("component harness merges within reach two and measures box unions") {
  auto empty = component_harness({}, 0.1, 100);
  CHECK(empty.max_diameter == 0);
  CHECK(empty.pass);

  // Chain {(0,0),(2,2),(4,2)} is one component: extent 4, plus a unit box on
  // each side. The far singleton stays its own component of diameter 2.
  std::vector<std::array<long long, 2>> sites = {{0, 0}, {2, 2}, {4, 2}, {100, 100}};
  auto res = component_harness(sites, 0.1, 70);
  CHECK(res.max_diameter == 6);
  CHECK(res.pass);  // 6 <= 7
  REQUIRE(res.worst_component.size() == 3);
  auto fail_res = component_harness(sites, 0.1, 50);
  CHECK(fail_res.max_diameter == 6);
  CHECK_FALSE(fail_res.pass);  // 6 > 5

  // L-inf gap three does not connect.
  auto split = component_harness({{0, 0}, {3, 0}}, 1.0, 10);
  CHECK(split.max_diameter == 2);
}
