#pragma once
#include <cstdint>
#include <tuple>
#include <vector>

#include "carpetlab/error.hpp"
#include "carpetlab/rational.hpp"
#include "carpetlab/rng.hpp"

namespace carpetlab {

// N-adic subdivision lattice of the closed unit square. The level-n box at
// (i, j) is [i/N^n, (i+1)/N^n] x [j/N^n, (j+1)/N^n]; i runs east, j north.
// Every geometric quantity derived from addresses stays rational: comparisons
// are integer cross-multiplications, no floats enter this module.
struct BoxAddress {
  int base = 2;     // N
  int level = 0;    // n
  long long i = 0;  // 0 <= i < N^n
  long long j = 0;  // 0 <= j < N^n

  friend bool operator==(const BoxAddress&, const BoxAddress&) = default;
  friend auto operator<=>(const BoxAddress& a, const BoxAddress& b) {
    return std::tie(a.level, a.i, a.j) <=> std::tie(b.level, b.i, b.j);
  }
};

inline BoxAddress make_box(int base, int level, long long i, long long j) {
  if (base < 2) fail_validation("unsupported-base", "subdivision base must be >= 2");
  if (level < 0) fail_validation("out-of-range", "negative level");
  long long side = ipow_checked(base, level);
  if (i < 0 || i >= side || j < 0 || j >= side)
    fail_validation("out-of-range", "box index outside [0, N^level)");
  return BoxAddress{base, level, i, j};
}

inline BoxAddress root_box(int base) { return make_box(base, 0, 0, 0); }

inline BoxAddress parent(const BoxAddress& b) {
  if (b.level == 0) fail_validation("out-of-range", "root box has no parent");
  return BoxAddress{b.base, b.level - 1, b.i / b.base, b.j / b.base};
}

// The N^2 children in row-major order: child c = row * N + col covers the
// (col, row) cell of the parent, so the list tiles the parent exactly.
inline std::vector<BoxAddress> subdivide(const BoxAddress& b) {
  ipow_checked(b.base, b.level + 1);  // reject depths whose indices would overflow
  std::vector<BoxAddress> out;
  out.reserve((std::size_t)b.base * b.base);
  for (int row = 0; row < b.base; ++row)
    for (int col = 0; col < b.base; ++col)
      out.push_back(BoxAddress{b.base, b.level + 1, b.i * b.base + col, b.j * b.base + row});
  return out;
}

// Closed axis-aligned rectangle with rational corners, x0 <= x1, y0 <= y1.
struct Rect {
  Rational x0, y0, x1, y1;
};

inline Rect rect_of(const BoxAddress& b) {
  long long d = ipow_checked(b.base, b.level);
  return Rect{Rational(b.i, d), Rational(b.j, d), Rational(b.i + 1, d), Rational(b.j + 1, d)};
}

// L-infinity distance between closed rectangles: the positive part of the
// larger per-axis gap (zero when they touch or overlap).
inline Rational linf_distance(const Rect& a, const Rect& b) {
  Rational gx = rat_max(a.x0, b.x0) - rat_min(a.x1, b.x1);
  Rational gy = rat_max(a.y0, b.y0) - rat_min(a.y1, b.y1);
  return rat_max(Rational(0), rat_max(gx, gy));
}

// L-infinity diameter (largest side).
inline Rational diameter(const Rect& r) {
  return rat_max(r.x1 - r.x0, r.y1 - r.y0);
}

inline bool rect_contains(const Rect& outer, const Rect& inner) {
  return outer.x0 <= inner.x0 && inner.x1 <= outer.x1 &&
         outer.y0 <= inner.y0 && inner.y1 <= outer.y1;
}

// How two closed rectangles with disjoint interiors meet.
enum class Contact { disjoint, corner, edge, overlap };

inline Contact contact_type(const Rect& a, const Rect& b) {
  Rational gx = rat_max(a.x0, b.x0) - rat_min(a.x1, b.x1);
  Rational gy = rat_max(a.y0, b.y0) - rat_min(a.y1, b.y1);
  Rational zero(0);
  if (gx > zero || gy > zero) return Contact::disjoint;
  if (gx < zero && gy < zero) return Contact::overlap;
  if (gx == zero && gy == zero) return Contact::corner;
  return Contact::edge;  // one axis flush, the other overlapping a segment
}

// Stable 64-bit key for hashing addresses (level <= 12, so i and j fit the
// mixing comfortably; collisions are astronomically unlikely and only ever
// touch cache performance, not correctness, where this key is used).
struct BoxKeyHash {
  std::size_t operator()(const BoxAddress& b) const {
    return (std::size_t)box_hash((std::uint64_t)b.base * 0x100 + (std::uint64_t)b.level,
                                 b.level, b.i, b.j);
  }
};

}  // namespace carpetlab
