#pragma once

#include <cstdint>
#include <vector>

#include "hypernets/image.hpp"

namespace hypernets {

// Procedurally drawn digit-like glyphs: 10 classes rendered from stroke
// primitives (segments and circular arcs) with antialiased edges. Class 9's
// primitives are the point reflection (x,y) -> (1-x, 1-y) of class 6's, so
// the two classes are exact 180-degree rotations of each other.
struct GlyphSet {
  int side = 0;
  std::vector<Image> images;
  std::vector<int> labels;  // aligned with images
};

// `per_class` jittered instances of each of the 10 classes, ordered class by
// class. Jitter: whole-pixel translation in {-1,0,1}^2 plus stroke-thickness
// scale in [0.85, 1.15], drawn from mix_seed(seed, class*per_class + i).
// Requires side >= 8.
GlyphSet synth_glyphs(int side, int per_class, std::uint64_t seed);

// The canonical (zero-jitter, unit-thickness) rendering of one class.
Image glyph_template(int side, int cls);

}  // namespace hypernets
