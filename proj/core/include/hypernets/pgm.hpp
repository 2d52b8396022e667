#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hypernets/image.hpp"

namespace hypernets {

// Grayscale raster with intensities in [0,1], row-major, y down.
struct Canvas {
  int width = 0;
  int height = 0;
  std::vector<double> px;

  Canvas() = default;
  Canvas(int width_, int height_, double fill = 1.0);

  double at(int r, int c) const { return px[static_cast<std::size_t>(r) * width + c]; }
  double& at(int r, int c) { return px[static_cast<std::size_t>(r) * width + c]; }
};

// round(v * 255), clamped to [0, 255].
std::uint8_t quantize_intensity(double v);

// Tiles equally sized square images into a grid with a 1-pixel white
// separator between neighbouring cells and no outer border. `cells` fills the
// grid row-major across `columns` columns; a partial final row leaves the
// remaining cells white. Resulting canvas is
//   width  = (side+1)*columns - 1,
//   height = (side+1)*rows    - 1,   rows = ceil(cells/columns).
Canvas tile_grid(const std::vector<Image>& cells, int columns);

// Binary PGM, P5, maxval 255, one byte per pixel.
void save_pgm(const Canvas& canvas, const std::string& path);

// Strict reader for the exact dialect save_pgm writes (used by round-trip
// checks). Throws FormatError on anything else.
Canvas load_pgm(const std::string& path);

}  // namespace hypernets
