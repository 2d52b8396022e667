#include "hypernets/glyphs.hpp"

#include <algorithm>
#include <vector>
#include <cmath>

#include "hypernets/errors.hpp"
#include "hypernets/rng.hpp"

namespace hypernets {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Stroke primitives live on the unit square, y down. Arc angles are degrees
// measured counterclockwise on screen from the +x axis; the arc sweeps from
// deg0 to deg1 with deg1 > deg0 (a full circle is (0, 360)).
struct Seg {
  double x0, y0, x1, y1;
};

struct Arc {
  double cx, cy, r, deg0, deg1;
};

struct GlyphShape {
  std::vector<Seg> segs;
  std::vector<Arc> arcs;
};

double dist_seg(double px, double py, const Seg& s) {
  const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  const double wx = px - s.x0, wy = py - s.y0;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0.0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

double dist_arc(double px, double py, const Arc& a) {
  const double dx = px - a.cx;
  // Screen y grows downward; flip to measure angles counterclockwise.
  const double dy = a.cy - py;
  const double rad = std::sqrt(dx * dx + dy * dy);
  double theta = std::atan2(dy, dx) * 180.0 / kPi;  // (-180, 180]
  // Shift theta by whole turns into [deg0, deg0 + 360).
  while (theta < a.deg0) theta += 360.0;
  while (theta >= a.deg0 + 360.0) theta -= 360.0;
  if (theta <= a.deg1) {
    return std::abs(rad - a.r);
  }
  // Off the sweep: distance to the nearer endpoint.
  auto endpoint_dist = [&](double deg) {
    const double t = deg * kPi / 180.0;
    const double ex = a.cx + a.r * std::cos(t);
    const double ey = a.cy - a.r * std::sin(t);
    return std::sqrt((px - ex) * (px - ex) + (py - ey) * (py - ey));
  };
  return std::min(endpoint_dist(a.deg0), endpoint_dist(a.deg1));
}

GlyphShape shape_for_class(int cls) {
  GlyphShape g;
  switch (cls) {
    case 0:
      g.arcs.push_back({0.5, 0.5, 0.27, 0.0, 360.0});
      break;
    case 1:
      g.segs.push_back({0.52, 0.2, 0.52, 0.8});
      g.segs.push_back({0.38, 0.34, 0.52, 0.2});
      break;
    case 2:
      g.arcs.push_back({0.5, 0.37, 0.16, -40.0, 180.0});
      g.segs.push_back({0.623, 0.473, 0.32, 0.76});
      g.segs.push_back({0.32, 0.76, 0.7, 0.76});
      break;
    case 3:
      g.arcs.push_back({0.48, 0.365, 0.145, -90.0, 100.0});
      g.arcs.push_back({0.48, 0.655, 0.145, -100.0, 90.0});
      break;
    case 4:
      g.segs.push_back({0.62, 0.22, 0.62, 0.8});
      g.segs.push_back({0.62, 0.22, 0.32, 0.6});
      g.segs.push_back({0.32, 0.6, 0.76, 0.6});
      break;
    case 5:
      g.segs.push_back({0.66, 0.22, 0.4, 0.22});
      g.segs.push_back({0.4, 0.22, 0.4, 0.47});
      g.arcs.push_back({0.49, 0.62, 0.16, -200.0, 80.0});
      break;
    case 6:
      g.arcs.push_back({0.46, 0.60, 0.19, 0.0, 360.0});
      g.segs.push_back({0.68, 0.18, 0.52, 0.44});
      break;
    case 9:
      // Deliberately not a half-turn of the 6: smaller loop, and the tail
      // leaves on the opposite side. A rotated 9 must stay distinguishable
      // from a rotated 6 or undoing the rotation back to canonical form is
      // ill-posed for that pair.
      g.arcs.push_back({0.52, 0.34, 0.15, 0.0, 360.0});
      g.segs.push_back({0.67, 0.38, 0.64, 0.80});
      break;
    case 7:
      g.segs.push_back({0.3, 0.24, 0.7, 0.24});
      g.segs.push_back({0.7, 0.24, 0.42, 0.78});
      g.segs.push_back({0.41, 0.5, 0.63, 0.5});
      break;
    case 8:
      g.arcs.push_back({0.5, 0.36, 0.125, 0.0, 360.0});
      g.arcs.push_back({0.5, 0.65, 0.145, 0.0, 360.0});
      break;
    default:
      throw ContractError("glyph class must be in [0, 10), got " + std::to_string(cls));
  }
  return g;
}

// Rendering runs in two stages. First each pixel's coverage of the sharp
// stroke mask is estimated on a 4x4 subpixel grid. Then a separable Gaussian
// blur spreads every edge across a few pixels. The blur radius is the knob
// that trades legibility against smoothness: wider blur means bilinear warps
// lose less, narrower blur keeps small features (like the bowl of a 6) open.
Image render(int side, const GlyphShape& g, double thickness, double dx_px, double dy_px) {
  const double half_width = 0.08 * thickness;
  constexpr int kSubsamples = 4;
  std::vector<double> coverage(static_cast<std::size_t>(side) * side, 0.0);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      double acc = 0.0;
      for (int i = 0; i < kSubsamples; ++i) {
        for (int j = 0; j < kSubsamples; ++j) {
          const double px = (c + (j + 0.5) / kSubsamples) / side - dx_px / side;
          const double py = (r + (i + 0.5) / kSubsamples) / side - dy_px / side;
          double d = 1e9;
          for (const Seg& s : g.segs) d = std::min(d, dist_seg(px, py, s));
          for (const Arc& a : g.arcs) d = std::min(d, dist_arc(px, py, a));
          if (d <= half_width) acc += 1.0;
        }
      }
      coverage[static_cast<std::size_t>(r) * side + c] = acc / (kSubsamples * kSubsamples);
    }
  }

  const double sigma_px = 1.5;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_px));
  std::vector<double> kernel(2 * radius + 1);
  double kernel_sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma_px * sigma_px));
    kernel_sum += kernel[i + radius];
  }
  for (double& v : kernel) v /= kernel_sum;

  // Horizontal then vertical pass; pixels outside the canvas count as zero.
  std::vector<double> rows(static_cast<std::size_t>(side) * side, 0.0);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int cc = c + i;
        if (cc >= 0 && cc < side) acc += coverage[static_cast<std::size_t>(r) * side + cc] * kernel[i + radius];
      }
      rows[static_cast<std::size_t>(r) * side + c] = acc;
    }
  }
  Image out = Image::zeros(side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int rr = r + i;
        if (rr >= 0 && rr < side) acc += rows[static_cast<std::size_t>(rr) * side + c] * kernel[i + radius];
      }
      out.at(r, c) = std::clamp(acc, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace

Image glyph_template(int side, int cls) {
  if (side < 8) throw ContractError("glyph side must be >= 8, got " + std::to_string(side));
  return render(side, shape_for_class(cls), 1.0, 0.0, 0.0);
}

GlyphSet synth_glyphs(int side, int per_class, std::uint64_t seed) {
  if (side < 8) throw ContractError("glyph side must be >= 8, got " + std::to_string(side));
  if (per_class < 1) throw ContractError("per_class must be >= 1");
  GlyphSet set;
  set.side = side;
  set.images.reserve(static_cast<std::size_t>(per_class) * 10);
  set.labels.reserve(static_cast<std::size_t>(per_class) * 10);
  for (int cls = 0; cls < 10; ++cls) {
    const GlyphShape shape = shape_for_class(cls);
    for (int i = 0; i < per_class; ++i) {
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cls) * per_class + i));
      const double thickness = rng.uniform(0.85, 1.15);
      const double dx = static_cast<double>(rng.pick_index(3) - 1);
      const double dy = static_cast<double>(rng.pick_index(3) - 1);
      set.images.push_back(render(side, shape, thickness, dx, dy));
      set.labels.push_back(cls);
    }
  }
  return set;
}

}  // namespace hypernets
