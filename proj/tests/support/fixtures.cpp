#include "fixtures.hpp"

#include <algorithm>
#include <cmath>

#include "fundusqa/rng.hpp"

namespace fundusqa::testsupport {

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

struct Vec2 {
    double x, y;
};

Vec2 bezier(const Vec2& p0, const Vec2& p1, const Vec2& p2, double t) {
    const double u = 1.0 - t;
    return {u * u * p0.x + 2.0 * u * t * p1.x + t * t * p2.x,
            u * u * p0.y + 2.0 * u * t * p1.y + t * t * p2.y};
}

// Accumulates anti-aliased coverage of a disk; jagged hard edges would add
// spurious fine-scale gradient orientations that vanish under blur.
void splat_disk(std::vector<float>& coverage, int width, int height, double cx, double cy,
                double radius) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1.0)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(cx + radius + 1.0)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1.0)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(cy + radius + 1.0)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double d = std::hypot(x - cx, y - cy);
            const float c = static_cast<float>(std::clamp(radius + 0.5 - d, 0.0, 1.0));
            float& slot = coverage[static_cast<std::size_t>(y) * width + x];
            if (c > slot) slot = c;
        }
    }
}

}  // namespace

FundusFixture make_fundus_fixture(uint64_t seed, int size, int stroke_count) {
    Rng rng(seed);
    const double cx = size / 2.0;
    const double cy = size / 2.0;
    const double fov_radius = 0.47 * size;

    const double base_r = 0.62 + rng.uniform_range(-0.05, 0.05);
    const double base_g = 0.36 + rng.uniform_range(-0.05, 0.05);
    const double base_b = 0.16 + rng.uniform_range(-0.04, 0.04);
    const double vignette = 0.22 + rng.uniform_range(0.0, 0.1);

    FundusFixture fixture;
    RasterImage& img = fixture.image;
    img.width = size;
    img.height = size;
    img.data.assign(static_cast<std::size_t>(size) * size * 3, 0.0f);
    fixture.stroke_mask.assign(static_cast<std::size_t>(size) * size, 0);

    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            const double r2 = dx * dx + dy * dy;
            if (r2 > fov_radius * fov_radius) continue;
            const double fall = 1.0 - vignette * r2 / (fov_radius * fov_radius);
            img.at(x, y, 0) = clamp01(base_r * fall);
            img.at(x, y, 1) = clamp01(base_g * fall);
            img.at(x, y, 2) = clamp01(base_b * fall);
        }
    }

    // Optic-disc blob with a wide soft rim; kept dim so its persistent rim
    // edge does not dominate the vessel signal.
    const double disc_angle = rng.uniform_range(0.0, 6.28318530717958647692);
    const double disc_cx = cx + 0.55 * fov_radius * std::cos(disc_angle);
    const double disc_cy = cy + 0.55 * fov_radius * std::sin(disc_angle);
    const double disc_radius = 0.13 * fov_radius * rng.uniform_range(0.9, 1.1);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dx = x - disc_cx;
            const double dy = y - disc_cy;
            const double d = std::sqrt(dx * dx + dy * dy);
            if (d > disc_radius * 2.0) continue;
            const double dfov_x = x - cx;
            const double dfov_y = y - cy;
            if (dfov_x * dfov_x + dfov_y * dfov_y > fov_radius * fov_radius) continue;
            const double soft = 1.0 / (1.0 + std::exp((d - disc_radius) / (0.30 * disc_radius)));
            img.at(x, y, 0) = clamp01(img.at(x, y, 0) + soft * 0.14);
            img.at(x, y, 1) = clamp01(img.at(x, y, 1) + soft * 0.17);
            img.at(x, y, 2) = clamp01(img.at(x, y, 2) + soft * 0.12);
        }
    }

    // Vessel strokes: quadratic arcs fanning out from points on the disc rim
    // toward the FOV rim, kept well inside the eroded FOV. Distinct start
    // points keep crossings rare, the way arcades leave the disc. Strokes stay
    // narrow (2-4 px): line gradients must lose energy to blur faster
    // than the mottle steps below, which is what reorders the quality scores.
    const double reach = 0.85 * fov_radius;
    std::vector<float> coverage(static_cast<std::size_t>(size) * size, 0.0f);
    auto draw_stroke = [&]() {
        const double a0 = rng.uniform_range(0.0, 6.28318530717958647692);
        const Vec2 p0{disc_cx + 1.1 * disc_radius * std::cos(a0),
                      disc_cy + 1.1 * disc_radius * std::sin(a0)};
        const double a2 = a0 + rng.uniform_range(-1.2, 1.2);
        const double r2 = rng.uniform_range(0.7, 1.0) * reach;
        Vec2 p2{cx + r2 * std::cos(a2), cy + r2 * std::sin(a2)};
        Vec2 mid{0.5 * (p0.x + p2.x), 0.5 * (p0.y + p2.y)};
        const double nx = -(p2.y - p0.y);
        const double ny = p2.x - p0.x;
        const double nn = std::sqrt(nx * nx + ny * ny) + 1e-12;
        const double bow = rng.uniform_range(-0.10, 0.10) * nn;
        Vec2 p1{mid.x + bow * nx / nn, mid.y + bow * ny / nn};

        const double w0 = rng.uniform_range(1.2, 1.9);
        const int steps = 600;
        for (int i = 0; i <= steps; ++i) {
            const double t = static_cast<double>(i) / steps;
            const Vec2 p = bezier(p0, p1, p2, t);
            const double dx = p.x - cx;
            const double dy = p.y - cy;
            if (dx * dx + dy * dy > reach * reach) break;
            // Taper to nothing at both ends: open stroke ends would leave
            // blob-like caps that behave differently from vessel walls.
            const double ramp = std::min({1.0, 6.0 * t, 6.0 * (1.0 - t)});
            const double w = w0 * ramp * (1.0 - 0.35 * t);
            if (w < 0.35) continue;
            splat_disk(coverage, size, size, p.x, p.y, w);
        }
    };
    auto painted_pixels = [&]() {
        long long n = 0;
        for (float c : coverage) n += c > 0.5f ? 1 : 0;
        return n;
    };
    for (int s = 0; s < stroke_count; ++s) draw_stroke();
    // Short draws happen; top up so every fixture carries comparable vessel mass.
    const long long min_stroke_pixels =
        static_cast<long long>(0.52 * stroke_count * size);
    for (int extra = 0; extra < stroke_count && painted_pixels() < min_stroke_pixels; ++extra) {
        draw_stroke();
    }
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        const float c = coverage[p];
        if (c <= 0.0f) continue;
        img.data[p * 3 + 0] *= 1.0f - c * 0.45f;
        img.data[p * 3 + 1] *= 1.0f - c * 0.65f;
        img.data[p * 3 + 2] *= 1.0f - c * 0.50f;
        if (c > 0.5f) fixture.stroke_mask[p] = 1;
    }

    // Soften edges, then overlay speckle: small dark spots cut from the upper
    // tail of a smooth random field. Their edge rings keep the local gradient
    // orientation mixture isotropic at every blur level, their blob shape is
    // rejected by a ridge filter, and step edges outlive line gradients under
    // blur, so defocus drains the directed vessel fraction of every window.
    img = blur_rgb(img, 0.8);
    GrayImage field = GrayImage::filled(size, size, 0.0);
    for (double& v : field.data) v = rng.uniform_range(-1.0, 1.0);
    field = gaussian_derivative(field, 3.5, 0, 0);
    double field_rms = 0.0;
    for (double v : field.data) field_rms += v * v;
    field_rms = std::sqrt(field_rms / field.data.size());
    const double spot_depth = 0.055;
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        const double cov =
            std::clamp((field.data[p] - 0.78 * field_rms) / (0.15 * field_rms), 0.0, 1.0);
        if (cov <= 0.0) continue;
        const double d = cov * spot_depth;
        img.data[p * 3 + 0] = clamp01(img.data[p * 3 + 0] - 0.8 * d);
        img.data[p * 3 + 1] = clamp01(img.data[p * 3 + 1] - d);
        img.data[p * 3 + 2] = clamp01(img.data[p * 3 + 2] - 0.7 * d);
    }
    // Outside the FOV stays exactly black.
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            if (dx * dx + dy * dy > fov_radius * fov_radius) {
                img.at(x, y, 0) = 0.0f;
                img.at(x, y, 1) = 0.0f;
                img.at(x, y, 2) = 0.0f;
            }
        }
    }
    return fixture;
}

RasterImage blur_rgb(const RasterImage& img, double sigma) {
    RasterImage out = img;
    for (int c = 0; c < 3; ++c) {
        GrayImage plane;
        plane.width = img.width;
        plane.height = img.height;
        plane.data.resize(img.pixel_count());
        for (std::size_t p = 0; p < img.pixel_count(); ++p) {
            plane.data[p] = img.data[p * 3 + c];
        }
        const GrayImage blurred = gaussian_derivative(plane, sigma, 0, 0);
        for (std::size_t p = 0; p < img.pixel_count(); ++p) {
            out.data[p * 3 + c] = clamp01(blurred.data[p]);
        }
    }
    return out;
}

RasterImage chroma_noise(const RasterImage& img, double amplitude, uint64_t seed) {
    Rng rng(seed);
    RasterImage out = img;
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        out.data[p * 3 + 0] = clamp01(out.data[p * 3 + 0] + rng.uniform_range(-amplitude, amplitude));
        out.data[p * 3 + 2] = clamp01(out.data[p * 3 + 2] + rng.uniform_range(-amplitude, amplitude));
    }
    return out;
}

GrayImage make_bar_image(int size, int bar_width) {
    GrayImage img = GrayImage::filled(size, size, 0.0);
    const int y0 = size / 2 - bar_width / 2;
    for (int y = y0; y < y0 + bar_width; ++y) {
        for (int x = 0; x < size; ++x) img.at(x, y) = 1.0;
    }
    return img;
}

GrayImage quantize_binary_fractions(const GrayImage& img) {
    GrayImage out = img;
    for (double& v : out.data) {
        v = std::floor(std::clamp(v, 0.0, 1.0) * 256.0) / 256.0;
    }
    return out;
}

GrayImage rot90cw(const GrayImage& img) {
    GrayImage out = GrayImage::filled(img.height, img.width, 0.0);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            out.at(x, y) = img.at(y, img.height - 1 - x);
        }
    }
    return out;
}

GrayImage rot90ccw(const GrayImage& img) {
    GrayImage out = GrayImage::filled(img.height, img.width, 0.0);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            out.at(x, y) = img.at(img.width - 1 - y, x);
        }
    }
    return out;
}

}  // namespace fundusqa::testsupport
