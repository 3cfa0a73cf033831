#pragma once

#include <cstdint>
#include <vector>

#include "fundusqa/raster.hpp"

namespace fundusqa::testsupport {

// Synthetic fundus-like image: dark surround, bright circular field of view,
// an optic-disc blob, and dark curvilinear strokes standing in for vessels.
// stroke_mask records the painted stroke cores (the ground truth), all of
// which stay at least 12 px inside the FOV rim.
struct FundusFixture {
    RasterImage image;
    std::vector<uint8_t> stroke_mask;
};

FundusFixture make_fundus_fixture(uint64_t seed, int size = 512, int stroke_count = 7);

// Per-channel Gaussian blur.
RasterImage blur_rgb(const RasterImage& img, double sigma);

// Additive seeded noise on the red and blue channels only.
RasterImage chroma_noise(const RasterImage& img, double amplitude, uint64_t seed);

// Horizontal bright bar (intensity 1) of the given width on a zero background,
// vertically centered.
GrayImage make_bar_image(int size, int bar_width);

// Snap all values to multiples of 1/256 so complements are float-exact.
GrayImage quantize_binary_fractions(const GrayImage& img);

GrayImage rot90cw(const GrayImage& img);
GrayImage rot90ccw(const GrayImage& img);

}  // namespace fundusqa::testsupport
