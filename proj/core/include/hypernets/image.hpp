#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "hypernets/rng.hpp"
#include "hypernets/tensor.hpp"

namespace hypernets {

// Square grayscale image, intensities in [0,1], row-major, y down.
struct Image {
  int side = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int side_, std::vector<double> pixels_);
  static Image zeros(int side);

  double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * side + c]; }
  double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * side + c]; }

  // [1 x side x side] tensor view (copies).
  Tensor as_tensor() const;
  // side*side flat tensor (copies).
  Tensor as_flat_tensor() const;
  static Image from_flat(int side, const std::vector<double>& values);
};

// Transformation descriptor handed to the models as the control input.
struct RotationParams {
  double sin_a = 0.0;
  double cos_a = 1.0;
};

struct AffineParams {
  // Forward map in recentred pixel coordinates (x right, y down):
  // [xd, yd]^T = [[a11 a12],[a21 a22]] [xs, ys]^T + [a13, a23]^T
  double a11 = 1.0, a12 = 0.0, a13 = 0.0;
  double a21 = 0.0, a22 = 1.0, a23 = 0.0;
};

using TransformParams = std::variant<RotationParams, AffineParams>;

// Flattened control vector: rotation -> {sin, cos}; affine -> the six
// coefficients in row-major order.
std::vector<double> control_vector(const TransformParams& p);
int control_dim(const TransformParams& p);

// Validates the variant invariants (unit norm / non-degenerate 2x2 block).
void validate_params(const TransformParams& p);

// (sin a, cos a) of an angle in degrees.
RotationParams encode_angle(double angle_deg);

// Rotates counterclockwise (on screen) about the pixel-grid center
// ((side-1)/2, (side-1)/2) by inverse mapping with bilinear sampling;
// source reads outside the canvas are zero; output clamped to [0,1].
Image rotate_image(const Image& img, double angle_deg);

// Inverse-mapped affine warp about the image center, translation in pixels.
// Throws ContractError when the 2x2 block is degenerate (det <= 0.1).
Image affine_transform(const Image& img, const AffineParams& p);

// Sampling ranges for random affine parameters. Defaults keep the warped
// glyph inside the canvas and recognizable.
struct AffineRanges {
  double rot_deg = 30.0;        // rotation component, +/- degrees
  double scale_lo = 0.8;        // per-axis scale
  double scale_hi = 1.2;
  double shear = 0.2;           // x-shear coefficient, +/-
  double translate_frac = 1.0 / 9.0;  // translation, +/- side * frac pixels
};

// Draws rotation/scale/shear/translation and composes them; determinant
// positivity is guaranteed by construction (product of positive scales).
AffineParams sample_affine_params(Rng& rng, const AffineRanges& ranges, int side);
AffineParams sample_affine_params(std::uint64_t seed, const AffineRanges& ranges, int side);

}  // namespace hypernets
