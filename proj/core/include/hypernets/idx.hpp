#pragma once

#include <string>
#include <vector>

#include "hypernets/image.hpp"

namespace hypernets {

// Reads an IDX image file (magic 0x00000803, big-endian dims, u8 pixels)
// into [0,1] images. Images must be square. When target_side > 0 and smaller
// than the stored side, images are downsampled by area averaging.
// Malformed content throws FormatError naming the byte offset.
std::vector<Image> load_idx_images(const std::string& path, int target_side = 0);

// Reads an IDX label file (magic 0x00000801, u8 labels).
std::vector<int> load_idx_labels(const std::string& path);

// Area-averaging resample of a square image to a smaller side.
Image downsample_area(const Image& img, int target_side);

}  // namespace hypernets
