#include "hypernets/pgm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hypernets/errors.hpp"

namespace hypernets {

Canvas::Canvas(int width_, int height_, double fill)
    : width(width_), height(height_),
      px(static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_), fill) {
  if (width_ <= 0 || height_ <= 0) throw ContractError("canvas dimensions must be positive");
}

std::uint8_t quantize_intensity(double v) {
  double q = std::round(v * 255.0);
  if (q < 0.0) q = 0.0;
  if (q > 255.0) q = 255.0;
  return static_cast<std::uint8_t>(q);
}

Canvas tile_grid(const std::vector<Image>& cells, int columns) {
  if (cells.empty()) throw ContractError("tile_grid: no cells");
  if (columns < 1) throw ContractError("tile_grid: columns must be >= 1");
  const int side = cells.front().side;
  if (side < 1) throw ContractError("tile_grid: cell side must be >= 1");
  for (const Image& img : cells) {
    if (img.side != side) throw DimensionError("tile_grid: cells disagree on side");
  }
  const int n = static_cast<int>(cells.size());
  const int rows = (n + columns - 1) / columns;
  Canvas canvas((side + 1) * columns - 1, (side + 1) * rows - 1, 1.0);
  for (int i = 0; i < n; ++i) {
    const int gr = i / columns;
    const int gc = i % columns;
    const int r0 = gr * (side + 1);
    const int c0 = gc * (side + 1);
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c) canvas.at(r0 + r, c0 + c) = cells[i].at(r, c);
  }
  return canvas;
}

void save_pgm(const Canvas& canvas, const std::string& path) {
  if (canvas.width <= 0 || canvas.height <= 0) throw ContractError("save_pgm: empty canvas");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("save_pgm: cannot open " + path);
  out << "P5\n" << canvas.width << " " << canvas.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(canvas.width));
  for (int r = 0; r < canvas.height; ++r) {
    for (int c = 0; c < canvas.width; ++c) row[static_cast<std::size_t>(c)] = quantize_intensity(canvas.at(r, c));
    out.write(reinterpret_cast<const char*>(row.data()), canvas.width);
  }
  if (!out) throw ContractError("save_pgm: write failed for " + path);
}

Canvas load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw FormatError("load_pgm: bad magic in " + path);
  long long w = 0, h = 0, maxval = 0;
  if (!(in >> w >> h >> maxval)) throw FormatError("load_pgm: bad header in " + path);
  if (w <= 0 || h <= 0) throw FormatError("load_pgm: bad dimensions in " + path);
  if (maxval != 255) throw FormatError("load_pgm: unsupported maxval in " + path);
  in.get();  // the single whitespace byte after the header
  std::vector<char> raw(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw FormatError("load_pgm: truncated raster in " + path);
  if (in.get() != std::ifstream::traits_type::eof())
    throw FormatError("load_pgm: trailing bytes in " + path);
  Canvas canvas(static_cast<int>(w), static_cast<int>(h), 0.0);
  for (std::size_t i = 0; i < raw.size(); ++i)
    canvas.px[i] = static_cast<double>(static_cast<unsigned char>(raw[i])) / 255.0;
  return canvas;
}

}  // namespace hypernets
