#pragma once
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "carpetlab/boxlattice.hpp"
#include "carpetlab/carpet.hpp"
#include "carpetlab/error.hpp"
#include "carpetlab/loewner.hpp"
#include "carpetlab/percolation.hpp"

namespace carpetlab {

// ---------------------------------------------------------------------------
// Deterministic rendering. Every picture is first reduced to a list of
// axis-aligned colored rectangles in unit coordinates (plus an optional
// polyline); the PNG raster and the SVG emitter consume the same list, so the
// two depict identical geometry by construction.
// ---------------------------------------------------------------------------

using Rgb = std::array<std::uint8_t, 3>;

struct ColoredRect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // unit square coordinates, y up
  Rgb color{0, 0, 0};
};

struct Scene {
  std::vector<ColoredRect> rects;                  // painted in order
  std::vector<std::array<double, 2>> polyline;     // optional overlay, scene coords
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;           // scene bounds
  Rgb background{255, 255, 255};
  Rgb stroke{40, 40, 40};
  std::vector<std::pair<std::string, Rgb>> legend;  // label -> swatch
};

// The legend travels as metadata (PNG tEXt chunk, SVG <desc>) rather than as
// painted pixels, so the two backends keep depicting identical geometry.
inline std::string legend_text(const Scene& sc) {
  std::string out;
  for (const auto& [label, c] : sc.legend) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c[0], c[1], c[2]);
    out += label + "=" + buf + "\n";
  }
  return out;
}

struct Image {
  int w = 0, h = 0;
  std::vector<Rgb> px;

  void fill(Rgb c) { std::fill(px.begin(), px.end(), c); }
  void set(int x, int y, Rgb c) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    px[(std::size_t)y * (std::size_t)w + (std::size_t)x] = c;
  }
  Rgb at(int x, int y) const { return px[(std::size_t)y * (std::size_t)w + (std::size_t)x]; }
};

// ---------------------------------------------------------------------------
// Scene builders.
// ---------------------------------------------------------------------------

namespace detail {

inline Rgb removal_shade(int level, int depth) {
  // light for shallow removals, darker for deep ones
  double f = depth <= 1 ? 0.0 : (double)(level - 1) / (double)(depth - 1);
  auto ch = [&](double a, double b) { return (std::uint8_t)std::lround(a + (b - a) * f); };
  return Rgb{ch(198, 90), ch(222, 140), ch(240, 200)};
}

inline Rgb cluster_color(int id) {
  std::uint64_t h = mix64((std::uint64_t)id + 0x5151ull);
  return Rgb{(std::uint8_t)(80 + (h & 0x7f)), (std::uint8_t)(80 + ((h >> 8) & 0x7f)),
             (std::uint8_t)(80 + ((h >> 16) & 0x7f))};
}

inline ColoredRect rect_of_box(const BoxAddress& b, Rgb c) {
  double s = std::pow((double)b.base, -(double)b.level);
  return ColoredRect{(double)b.i * s, (double)b.j * s, (double)(b.i + 1) * s,
                     (double)(b.j + 1) * s, c};
}

}  // namespace detail

// Removed boxes shaded by the level they disappeared at; corner trims in a
// distinct accent color on top.
inline Scene carpet_scene(const CarpetApprox& c) {
  Scene sc;
  sc.legend.emplace_back("kept", sc.background);
  if (!c.root_good) return sc;
  const Rgb trim_color{60, 150, 75};
  for (int n = 1; n <= c.depth; ++n)
    sc.legend.emplace_back("removed level " + std::to_string(n),
                           detail::removal_shade(n, c.depth));
  sc.legend.emplace_back("trimmed corner", trim_color);
  for (int n = 1; n <= c.depth && n < (int)c.star_kept.size(); ++n) {
    const LevelMask& kept = c.star_kept[(std::size_t)n];
    Rgb shade = detail::removal_shade(n, c.depth);
    for_each_mask_box(c.star_kept[(std::size_t)n - 1], c.base, [&](const BoxAddress& parent) {
      for (const auto& child : subdivide(parent))
        if (!kept.test(child.i, child.j)) sc.rects.push_back(detail::rect_of_box(child, shade));
    });
  }
  for (const auto& lv : c.star_trimmed)
    for (const auto& b : lv) sc.rects.push_back(detail::rect_of_box(b, trim_color));
  return sc;
}

// One color per cluster of removed boxes.
inline Scene cluster_scene(const ClusterSet& cs) {
  Scene sc;
  for (int id = 0; id < (int)cs.members.size() && id < 8; ++id)
    sc.legend.emplace_back("cluster " + std::to_string(id), detail::cluster_color(id));
  for (std::size_t i = 0; i < cs.boxes.size(); ++i)
    sc.rects.push_back(
        detail::rect_of_box(cs.boxes[i], detail::cluster_color(cs.cluster_of[i])));
  return sc;
}

inline Scene trace_scene(const TracePolyline& t) {
  Scene sc;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  for (const auto& z : t.tips) {
    x0 = std::min(x0, z.real());
    x1 = std::max(x1, z.real());
    y1 = std::max(y1, z.imag());
  }
  double pad = 0.05 * std::max({x1 - x0, y1 - y0, 1e-9});
  sc.x0 = x0 - pad;
  sc.x1 = x1 + pad;
  sc.y0 = y0;
  sc.y1 = y1 + pad;
  for (const auto& z : t.tips) sc.polyline.push_back({z.real(), z.imag()});
  sc.legend.emplace_back("trace", sc.stroke);
  return sc;
}

// ---------------------------------------------------------------------------
// Raster and SVG backends.
// ---------------------------------------------------------------------------

inline Image render_scene(const Scene& sc, int size) {
  if (size < 8 || size > 8192) fail_validation("out-of-range", "render size out of range");
  double sw = sc.x1 - sc.x0, sh = sc.y1 - sc.y0;
  if (!(sw > 0) || !(sh > 0)) fail_validation("out-of-range", "scene is empty");
  Image img;
  img.w = size;
  img.h = std::max(1, (int)std::lround(size * sh / sw));
  img.px.assign((std::size_t)img.w * (std::size_t)img.h, sc.background);
  double scale = (double)img.w / sw;
  auto to_px = [&](double x, double y) {
    return std::array<int, 2>{(int)std::floor((x - sc.x0) * scale),
                              img.h - 1 - (int)std::floor((y - sc.y0) * scale)};
  };
  for (const auto& r : sc.rects) {
    int px0 = (int)std::lround((r.x0 - sc.x0) * scale);
    int px1 = (int)std::lround((r.x1 - sc.x0) * scale);
    int py0 = img.h - (int)std::lround((r.y1 - sc.y0) * scale);
    int py1 = img.h - (int)std::lround((r.y0 - sc.y0) * scale);
    px0 = std::clamp(px0, 0, img.w);
    px1 = std::clamp(px1, 0, img.w);
    py0 = std::clamp(py0, 0, img.h);
    py1 = std::clamp(py1, 0, img.h);
    for (int y = py0; y < py1; ++y)
      for (int x = px0; x < px1; ++x) img.set(x, y, r.color);
  }
  for (std::size_t i = 0; i + 1 < sc.polyline.size(); ++i) {
    double ax = sc.polyline[i][0], ay = sc.polyline[i][1];
    double bx = sc.polyline[i + 1][0], by = sc.polyline[i + 1][1];
    double span = std::max(std::abs(bx - ax), std::abs(by - ay)) * scale;
    long long nsub = std::max((long long)1, (long long)std::ceil(span * 2.0));
    for (long long s = 0; s <= nsub; ++s) {
      double f = (double)s / (double)nsub;
      auto [x, y] = to_px(ax + (bx - ax) * f, ay + (by - ay) * f);
      img.set(x, y, sc.stroke);
    }
  }
  for (int x = 0; x < img.w; ++x) {
    img.set(x, 0, sc.stroke);
    img.set(x, img.h - 1, sc.stroke);
  }
  for (int y = 0; y < img.h; ++y) {
    img.set(0, y, sc.stroke);
    img.set(img.w - 1, y, sc.stroke);
  }
  return img;
}

namespace detail {

inline std::string rgb_hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

inline std::string render_svg(const Scene& sc, int size) {
  if (size < 8 || size > 8192) fail_validation("out-of-range", "render size out of range");
  double sw = sc.x1 - sc.x0, sh = sc.y1 - sc.y0;
  if (!(sw > 0) || !(sh > 0)) fail_validation("out-of-range", "scene is empty");
  double scale = (double)size / sw;
  int hpx = std::max(1, (int)std::lround(size * sh / sw));
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(size) +
         "\" height=\"" + std::to_string(hpx) + "\">\n";
  if (!sc.legend.empty()) {
    std::string desc = legend_text(sc);
    std::string escaped;
    for (char ch : desc) {
      if (ch == '&') escaped += "&amp;";
      else if (ch == '<') escaped += "&lt;";
      else if (ch == '>') escaped += "&gt;";
      else escaped += ch;
    }
    svg += "<desc>legend\n" + escaped + "</desc>\n";
  }
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"" + detail::rgb_hex(sc.background) +
         "\"/>\n";
  for (const auto& r : sc.rects) {
    double x = (r.x0 - sc.x0) * scale;
    double y = (double)hpx - (r.y1 - sc.y0) * scale;
    svg += "<rect x=\"" + detail::fmt_num(x) + "\" y=\"" + detail::fmt_num(y) + "\" width=\"" +
           detail::fmt_num((r.x1 - r.x0) * scale) + "\" height=\"" +
           detail::fmt_num((r.y1 - r.y0) * scale) + "\" fill=\"" + detail::rgb_hex(r.color) +
           "\"/>\n";
  }
  if (!sc.polyline.empty()) {
    svg += "<polyline fill=\"none\" stroke=\"" + detail::rgb_hex(sc.stroke) +
           "\" stroke-width=\"1\" points=\"";
    for (const auto& p : sc.polyline) {
      svg += detail::fmt_num((p[0] - sc.x0) * scale) + "," +
             detail::fmt_num((double)hpx - (p[1] - sc.y0) * scale) + " ";
    }
    svg += "\"/>\n";
  }
  svg += "<rect x=\"0.5\" y=\"0.5\" width=\"" + std::to_string(size - 1) + "\" height=\"" +
         std::to_string(hpx - 1) + "\" fill=\"none\" stroke=\"" + detail::rgb_hex(sc.stroke) +
         "\" stroke-width=\"1\"/>\n";
  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------------------
// PNG encoding: 8-bit RGB, filter 0 scanlines, one zlib stream.
// ---------------------------------------------------------------------------

namespace detail {

inline void push_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back((std::uint8_t)(x >> 24));
  v.push_back((std::uint8_t)(x >> 16));
  v.push_back((std::uint8_t)(x >> 8));
  v.push_back((std::uint8_t)x);
}

inline void push_chunk(std::vector<std::uint8_t>& out, const char type[5],
                       const std::vector<std::uint8_t>& data) {
  push_u32(out, (std::uint32_t)data.size());
  std::size_t start = out.size();
  for (int i = 0; i < 4; ++i) out.push_back((std::uint8_t)type[i]);
  out.insert(out.end(), data.begin(), data.end());
  std::uint32_t crc =
      (std::uint32_t)crc32(0, out.data() + start, (uInt)(out.size() - start));
  push_u32(out, crc);
}

}  // namespace detail

inline std::vector<std::uint8_t> png_encode(const Image& img, const std::string& legend = "") {
  check(img.w > 0 && img.h > 0, "out-of-range", "empty image");
  std::vector<std::uint8_t> raw;
  raw.reserve((std::size_t)img.h * ((std::size_t)img.w * 3 + 1));
  for (int y = 0; y < img.h; ++y) {
    raw.push_back(0);  // filter type none
    for (int x = 0; x < img.w; ++x) {
      Rgb c = img.at(x, y);
      raw.push_back(c[0]);
      raw.push_back(c[1]);
      raw.push_back(c[2]);
    }
  }
  uLongf bound = compressBound((uLong)raw.size());
  std::vector<std::uint8_t> compressed(bound);
  int rc = compress2(compressed.data(), &bound, raw.data(), (uLong)raw.size(), 6);
  check(rc == Z_OK, "io-error", "zlib compression failed");
  compressed.resize(bound);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  detail::push_u32(ihdr, (std::uint32_t)img.w);
  detail::push_u32(ihdr, (std::uint32_t)img.h);
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // no interlace
  detail::push_chunk(out, "IHDR", ihdr);
  if (!legend.empty()) {
    std::vector<std::uint8_t> text;
    const char* kw = "legend";
    text.insert(text.end(), kw, kw + 6);
    text.push_back(0);
    text.insert(text.end(), legend.begin(), legend.end());
    detail::push_chunk(out, "tEXt", text);
  }
  detail::push_chunk(out, "IDAT", compressed);
  detail::push_chunk(out, "IEND", {});
  return out;
}

}  // namespace carpetlab
