#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fundusqa {

// RGB raster with float intensities in [0, 1], row-major, interleaved channels.
struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // width * height * 3

    static RasterImage filled(int w, int h, float r, float g, float b);

    float& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    float at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// Single-channel plane. Double precision: the derivative and anisotropy
// contracts below are tighter than float rounding.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    static GrayImage filled(int w, int h, double v);

    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// Field-of-view mask plus the tight bounding box of its true pixels
// (inclusive corners).
struct FovMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
    static FovMask full(int w, int h);
};

// Builds a mask from a boolean plane and computes the bounding box.
// Throws std::runtime_error when the plane has no true pixel.
FovMask make_fov_mask(std::vector<uint8_t> plane, int width, int height);

struct ScaleSpaceParams {
    std::vector<double> sigmas;
    double truncation_radius = 4.0;
};

// sigmas strictly increasing and positive, truncation_radius >= 3.
void validate(const ScaleSpaceParams& p);

inline constexpr double kDefaultFovThreshold = 0.06;

GrayImage green_channel(const RasterImage& img);

// 1 - v, per pixel.
GrayImage complement(const GrayImage& img);

// Mean-channel threshold, then largest 8-connected component.
// Throws std::runtime_error when no pixel exceeds the threshold.
FovMask detect_fov(const RasterImage& img, double luminance_threshold = kDefaultFovThreshold);

// Chebyshev-ball erosion (radius iterations of 3x3 min, off-image = false).
// nullopt when the mask erodes away completely.
std::optional<FovMask> erode_mask(const FovMask& mask, int radius);

// Crop to the mask bounding box, then bilinear resample to target x target.
RasterImage crop_resize(const RasterImage& img, const FovMask& mask, int target);

// Sampled Gaussian-derivative taps on [-r, r], r = ceil(truncation * sigma).
// Even orders are built exactly symmetric and odd orders exactly antisymmetric.
// Order 0 is normalized to unit DC gain, order 1 to unit response on a ramp of
// slope 1, order 2 to response 2 on x^2 (derivative kernels carry zero DC).
std::vector<double> gaussian_kernel_taps(double sigma, int order, double truncation = 4.0);

// Separable passes with half-sample reflection ("dcba|abcd|dcba"). Symmetric
// tap pairs are accumulated together, so reversing the traversal direction
// negates odd-kernel results exactly and leaves even-kernel results unchanged.
GrayImage convolve_x(const GrayImage& img, std::span<const double> taps);
GrayImage convolve_y(const GrayImage& img, std::span<const double> taps);

// d^(dx+dy) / dx^dx dy^dy of the Gaussian-smoothed image; dx, dy in {0,1,2},
// dx + dy <= 2. The x pass runs first.
GrayImage gaussian_derivative(const GrayImage& img, double sigma, int dx, int dy,
                              double truncation = 4.0);

struct HessianPlanes {
    GrayImage ixx, ixy, iyy;
};

// Second-order Gaussian derivatives scaled by sigma^2. Pass orders are chosen
// so that a 90-degree rotation of the input maps (ixx, iyy) onto the rotated
// (iyy, ixx) bit for bit, and ixy is symmetrized over both pass orders so its
// square is rotation-exact as well.
HessianPlanes hessian_at_scale(const GrayImage& img, double sigma, double truncation = 4.0);

struct Patch {
    int x = 0;
    int y = 0;
    RasterImage image;
};

// `count` patches with origins drawn uniformly over all valid positions,
// with replacement, from the seeded generator. Bit-identical per seed.
std::vector<Patch> extract_patches(const RasterImage& img, int size, int count, uint64_t seed);

// Half-sample reflection of an arbitrary index into [0, n).
int reflect_index(int i, int n);

}  // namespace fundusqa
