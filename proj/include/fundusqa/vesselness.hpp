#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fundusqa/raster.hpp"

namespace fundusqa {

struct FrangiParams {
    ScaleSpaceParams scales{{1.0, 1.41, 2.0, 2.83, 4.0}, 4.0};
    double beta = 0.5;  // blob rejection
    double c = 15.0;    // structureness, on intensities mapped to [0, 100]
    bool bright_ridges = true;
};

void validate(const FrangiParams& p);

// Per-pixel ridge likelihood in [0, 1].
struct VesselProbabilityMap {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct BinaryVesselTree {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
};

// Multiscale ridge filter on Hessian eigenvalues |l1| <= |l2|:
//   V = exp(-(l1/l2)^2 / (2 beta^2)) * (1 - exp(-(l1^2 + l2^2) / (2 c^2)))
// when l2 < 0 for bright ridges (l2 = 0 gives V = 0), maximized over scales.
// Intensities are mapped to [0, 100] before the Hessian so the default c
// matches. Dark-ridge mode runs the bright-ridge filter on the complemented
// image, which makes toggling bright_ridges together with complementing the
// input an exact identity.
VesselProbabilityMap frangi_vesselness(const GrayImage& green, const FrangiParams& params);

// true where map >= threshold.
BinaryVesselTree binarize(const VesselProbabilityMap& map, double threshold);

// Green channel, complemented when bright_ridges is set (vessels are dark in
// fundus images), filtered, restricted to the FOV eroded by 5 px, binarized.
BinaryVesselTree segment_classical(const RasterImage& img, const FovMask& mask,
                                   const FrangiParams& params, double threshold);

inline constexpr int kFovErosionRadius = 5;

// 1-bit PNG interchange (0 = background, max = vessel).
void save_vessel_tree(const BinaryVesselTree& tree, const std::string& path);
BinaryVesselTree load_vessel_tree(const std::string& path);

}  // namespace fundusqa
