#include "hypernets/idx.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>

#include "hypernets/errors.hpp"

namespace hypernets {

namespace {

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_u32_be(const std::vector<unsigned char>& b, std::size_t off,
                          const std::string& what) {
  if (off + 4 > b.size()) {
    throw FormatError("truncated IDX file: " + what + " at byte " + std::to_string(off));
  }
  return (static_cast<std::uint32_t>(b[off]) << 24) | (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}

}  // namespace

Image downsample_area(const Image& img, int target_side) {
  if (target_side <= 0) throw ContractError("downsample target side must be positive");
  if (target_side >= img.side) {
    if (target_side == img.side) return img;
    throw ContractError("downsample target " + std::to_string(target_side) +
                        " exceeds source side " + std::to_string(img.side));
  }
  const int s = img.side, t = target_side;
  const double ratio = static_cast<double>(s) / t;
  Image out = Image::zeros(t);
  for (int r = 0; r < t; ++r) {
    const double y0 = r * ratio, y1 = (r + 1) * ratio;
    for (int c = 0; c < t; ++c) {
      const double x0 = c * ratio, x1 = (c + 1) * ratio;
      double acc = 0.0;
      for (int sr = static_cast<int>(y0); sr < s && sr < y1; ++sr) {
        const double hy = std::min<double>(sr + 1, y1) - std::max<double>(sr, y0);
        for (int sc = static_cast<int>(x0); sc < s && sc < x1; ++sc) {
          const double hx = std::min<double>(sc + 1, x1) - std::max<double>(sc, x0);
          acc += img.at(sr, sc) * hy * hx;
        }
      }
      out.at(r, c) = std::clamp(acc / (ratio * ratio), 0.0, 1.0);
    }
  }
  return out;
}

std::vector<Image> load_idx_images(const std::string& path, int target_side) {
  const std::vector<unsigned char> bytes = read_all(path);
  const std::uint32_t magic = read_u32_be(bytes, 0, "magic");
  if (magic != 0x00000803u) {
    throw FormatError("bad IDX image magic 0x" + std::to_string(magic) + " at byte 0 in " + path);
  }
  const std::uint32_t count = read_u32_be(bytes, 4, "image count");
  const std::uint32_t rows = read_u32_be(bytes, 8, "row count");
  const std::uint32_t cols = read_u32_be(bytes, 12, "column count");
  if (rows != cols) {
    throw FormatError("IDX images must be square, got " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " at byte 8");
  }
  const std::size_t payload = static_cast<std::size_t>(count) * rows * cols;
  if (bytes.size() < 16 + payload) {
    throw FormatError("truncated IDX payload: expected " + std::to_string(payload) +
                      " bytes, got " + std::to_string(bytes.size() - 16) + " at byte 16");
  }
  std::vector<Image> images;
  images.reserve(count);
  const int side = static_cast<int>(rows);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::vector<double> px(static_cast<std::size_t>(side) * side);
    const std::size_t base = 16 + static_cast<std::size_t>(i) * side * side;
    for (std::size_t j = 0; j < px.size(); ++j) px[j] = bytes[base + j] / 255.0;
    Image img(side, std::move(px));
    if (target_side > 0 && target_side != side) img = downsample_area(img, target_side);
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<int> load_idx_labels(const std::string& path) {
  const std::vector<unsigned char> bytes = read_all(path);
  const std::uint32_t magic = read_u32_be(bytes, 0, "magic");
  if (magic != 0x00000801u) {
    throw FormatError("bad IDX label magic 0x" + std::to_string(magic) + " at byte 0 in " + path);
  }
  const std::uint32_t count = read_u32_be(bytes, 4, "label count");
  if (bytes.size() < 8 + count) {
    throw FormatError("truncated IDX labels: expected " + std::to_string(count) + " bytes, got " +
                      std::to_string(bytes.size() - 8) + " at byte 8");
  }
  std::vector<int> labels(count);
  for (std::uint32_t i = 0; i < count; ++i) labels[i] = bytes[8 + i];
  return labels;
}

}  // namespace hypernets
