#include "hypernets/image.hpp"

#include <cmath>

#include "hypernets/errors.hpp"

namespace hypernets {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Image::Image(int side_, std::vector<double> pixels_) : side(side_), pixels(std::move(pixels_)) {
  if (side <= 0) throw DimensionError("image side must be positive");
  if (pixels.size() != static_cast<std::size_t>(side) * side) {
    throw DimensionError("image pixel count " + std::to_string(pixels.size()) +
                         " does not match side " + std::to_string(side));
  }
}

Image Image::zeros(int side) {
  return Image(side, std::vector<double>(static_cast<std::size_t>(side) * side, 0.0));
}

Tensor Image::as_tensor() const { return Tensor({1, side, side}, pixels); }

Tensor Image::as_flat_tensor() const { return Tensor({side * side}, pixels); }

Image Image::from_flat(int side, const std::vector<double>& values) {
  return Image(side, values);
}

std::vector<double> control_vector(const TransformParams& p) {
  if (const auto* r = std::get_if<RotationParams>(&p)) {
    return {r->sin_a, r->cos_a};
  }
  const auto& a = std::get<AffineParams>(p);
  return {a.a11, a.a12, a.a13, a.a21, a.a22, a.a23};
}

int control_dim(const TransformParams& p) {
  return std::holds_alternative<RotationParams>(p) ? 2 : 6;
}

void validate_params(const TransformParams& p) {
  if (const auto* r = std::get_if<RotationParams>(&p)) {
    const double norm = r->sin_a * r->sin_a + r->cos_a * r->cos_a;
    if (std::abs(norm - 1.0) > 1e-9) {
      throw ContractError("rotation params are not on the unit circle: sin^2+cos^2 = " +
                          std::to_string(norm));
    }
    return;
  }
  const auto& a = std::get<AffineParams>(p);
  const double det = a.a11 * a.a22 - a.a12 * a.a21;
  if (!(det > 0.1)) {
    throw ContractError("affine 2x2 block is degenerate: det = " + std::to_string(det));
  }
}

RotationParams encode_angle(double angle_deg) {
  const double rad = angle_deg * kPi / 180.0;
  return RotationParams{std::sin(rad), std::cos(rad)};
}

namespace {

// Inverse-mapping warp core. `to_source` maps recentred destination pixel
// coordinates (x right, y down) to recentred source coordinates.
template <typename Fn>
Image warp_inverse(const Image& img, Fn&& to_source) {
  const int s = img.side;
  const double ctr = (s - 1) / 2.0;
  Image out = Image::zeros(s);
  for (int r = 0; r < s; ++r) {
    for (int c = 0; c < s; ++c) {
      const double xd = c - ctr;
      const double yd = r - ctr;
      double xs, ys;
      to_source(xd, yd, xs, ys);
      const double sc = xs + ctr;
      const double sr = ys + ctr;
      const double fr0 = std::floor(sr);
      const double fc0 = std::floor(sc);
      const int r0 = static_cast<int>(fr0);
      const int c0 = static_cast<int>(fc0);
      const double dr = sr - fr0;
      const double dc = sc - fc0;
      auto read = [&](int rr, int cc) -> double {
        if (rr < 0 || rr >= s || cc < 0 || cc >= s) return 0.0;
        return img.at(rr, cc);
      };
      const double v = read(r0, c0) * (1.0 - dr) * (1.0 - dc) +
                       read(r0, c0 + 1) * (1.0 - dr) * dc +
                       read(r0 + 1, c0) * dr * (1.0 - dc) +
                       read(r0 + 1, c0 + 1) * dr * dc;
      out.at(r, c) = std::min(1.0, std::max(0.0, v));
    }
  }
  return out;
}

}  // namespace

Image rotate_image(const Image& img, double angle_deg) {
  if (!std::isfinite(angle_deg)) throw ContractError("rotation angle must be finite");
  const double rad = angle_deg * kPi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  // Counterclockwise on screen with y down is the inverse of the math-plane
  // rotation; the inverse map below is R(-a) expressed in y-down coordinates.
  return warp_inverse(img, [cs, sn](double xd, double yd, double& xs, double& ys) {
    xs = cs * xd - sn * yd;
    ys = sn * xd + cs * yd;
  });
}

Image affine_transform(const Image& img, const AffineParams& p) {
  validate_params(TransformParams{p});
  const double det = p.a11 * p.a22 - p.a12 * p.a21;
  const double i11 = p.a22 / det, i12 = -p.a12 / det;
  const double i21 = -p.a21 / det, i22 = p.a11 / det;
  return warp_inverse(img, [&p, i11, i12, i21, i22](double xd, double yd, double& xs, double& ys) {
    const double tx = xd - p.a13;
    const double ty = yd - p.a23;
    xs = i11 * tx + i12 * ty;
    ys = i21 * tx + i22 * ty;
  });
}

AffineParams sample_affine_params(Rng& rng, const AffineRanges& ranges, int side) {
  const double a = rng.uniform(-ranges.rot_deg, ranges.rot_deg) * kPi / 180.0;
  const double sx = rng.uniform(ranges.scale_lo, ranges.scale_hi);
  const double sy = rng.uniform(ranges.scale_lo, ranges.scale_hi);
  const double h = rng.uniform(-ranges.shear, ranges.shear);
  const double t = side * ranges.translate_frac;
  const double tx = rng.uniform(-t, t);
  const double ty = rng.uniform(-t, t);

  // M = R(a) * Shear(h) * Scale(sx, sy), R in y-down screen convention.
  const double cs = std::cos(a), sn = std::sin(a);
  AffineParams p;
  p.a11 = cs * sx;
  p.a12 = (cs * h + sn) * sy;
  p.a21 = -sn * sx;
  p.a22 = (-sn * h + cs) * sy;
  p.a13 = tx;
  p.a23 = ty;
  return p;
}

AffineParams sample_affine_params(std::uint64_t seed, const AffineRanges& ranges, int side) {
  Rng rng(seed);
  return sample_affine_params(rng, ranges, side);
}

}  // namespace hypernets
