#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fundusqa/raster.hpp"

namespace fundusqa {

// Reads a PNG (any color type, 8- or 16-bit, expanded to RGB) or a binary PPM
// (P6). Intensities are normalized by the bit-depth maximum.
// Throws std::runtime_error on unreadable or unsupported files.
RasterImage load_image(const std::string& path);

// 8- or 16-bit RGB PNG.
void save_png(const RasterImage& img, const std::string& path, int bit_depth = 8);

// 1-bit grayscale PNG of a boolean plane (0 = background, max = foreground).
void save_mask_png(const std::vector<uint8_t>& plane, int width, int height,
                   const std::string& path);

// Any grayscale-convertible PNG, thresholded at half intensity.
std::vector<uint8_t> load_mask_png(const std::string& path, int& width, int& height);

}  // namespace fundusqa
