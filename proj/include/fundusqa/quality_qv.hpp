#pragma once

#include <cstdint>

#include "fundusqa/raster.hpp"
#include "fundusqa/vesselness.hpp"

namespace fundusqa {

// Gradient-orientation coherence in [0, 1].
struct AnisotropyField {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// Per pixel, the central-difference gradients over an odd window form an
// n x 2 matrix with singular values s1 >= s2 >= 0; the output is
// (s1 - s2) / (s1 + s2), or 0 where s1 + s2 < 1e-12.
AnisotropyField local_svd_anisotropy(const GrayImage& green, int window);

struct QvReport {
    double score = 0.0;
    long long vessel_pixel_count = 0;
    uint64_t params_fingerprint = 0;
};

uint64_t qv_params_fingerprint(const FrangiParams& params, int window);

// Vesselness-weighted mean of the anisotropy field over the detected FOV
// (eroded by 5 px): sum V*A / sum V. Degenerate images (no FOV or no vessel
// evidence) score 0. Deterministic for identical inputs.
QvReport qv_score(const RasterImage& img, const FrangiParams& params = {}, int window = 15);

inline constexpr double kAnisotropyEps = 1e-12;

}  // namespace fundusqa
