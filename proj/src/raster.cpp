#include "fundusqa/raster.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fundusqa/parallel.hpp"
#include "fundusqa/rng.hpp"

namespace fundusqa {

RasterImage RasterImage::filled(int w, int h, float r, float g, float b) {
    RasterImage img;
    img.width = w;
    img.height = h;
    img.data.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        img.data[p * 3 + 0] = r;
        img.data[p * 3 + 1] = g;
        img.data[p * 3 + 2] = b;
    }
    return img;
}

GrayImage GrayImage::filled(int w, int h, double v) {
    GrayImage img;
    img.width = w;
    img.height = h;
    img.data.assign(static_cast<std::size_t>(w) * h, v);
    return img;
}

FovMask FovMask::full(int w, int h) {
    FovMask m;
    m.width = w;
    m.height = h;
    m.data.assign(static_cast<std::size_t>(w) * h, 1);
    m.x0 = 0;
    m.y0 = 0;
    m.x1 = w - 1;
    m.y1 = h - 1;
    return m;
}

FovMask make_fov_mask(std::vector<uint8_t> plane, int width, int height) {
    if (width < 1 || height < 1 ||
        plane.size() != static_cast<std::size_t>(width) * height) {
        throw std::invalid_argument("make_fov_mask: plane shape mismatch");
    }
    FovMask m;
    m.width = width;
    m.height = height;
    m.data = std::move(plane);
    int x0 = width, y0 = height, x1 = -1, y1 = -1;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (m.data[static_cast<std::size_t>(y) * width + x]) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
        }
    }
    if (x1 < 0) throw std::runtime_error("make_fov_mask: empty mask");
    m.x0 = x0;
    m.y0 = y0;
    m.x1 = x1;
    m.y1 = y1;
    return m;
}

void validate(const ScaleSpaceParams& p) {
    if (p.sigmas.empty()) throw std::invalid_argument("scale space: no sigmas");
    double prev = 0.0;
    for (double s : p.sigmas) {
        if (!(s > prev)) {
            throw std::invalid_argument("scale space: sigmas must be strictly increasing and > 0");
        }
        prev = s;
    }
    if (!(p.truncation_radius >= 3.0)) {
        throw std::invalid_argument("scale space: truncation_radius must be >= 3");
    }
}

GrayImage green_channel(const RasterImage& img) {
    GrayImage g;
    g.width = img.width;
    g.height = img.height;
    g.data.resize(img.pixel_count());
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        g.data[p] = static_cast<double>(img.data[p * 3 + 1]);
    }
    return g;
}

GrayImage complement(const GrayImage& img) {
    GrayImage out = img;
    for (double& v : out.data) v = 1.0 - v;
    return out;
}

FovMask detect_fov(const RasterImage& img, double luminance_threshold) {
    if (!(luminance_threshold > 0.0 && luminance_threshold < 1.0)) {
        throw std::invalid_argument("detect_fov: threshold must lie in (0,1)");
    }
    const int w = img.width;
    const int h = img.height;
    std::vector<uint8_t> above(static_cast<std::size_t>(w) * h, 0);
    bool any = false;
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        const double mean = (static_cast<double>(img.data[p * 3 + 0]) +
                             static_cast<double>(img.data[p * 3 + 1]) +
                             static_cast<double>(img.data[p * 3 + 2])) / 3.0;
        if (mean > luminance_threshold) {
            above[p] = 1;
            any = true;
        }
    }
    if (!any) throw std::runtime_error("detect_fov: no pixel above threshold");

    // Largest 8-connected component, first-found on ties (row-major scan).
    std::vector<int32_t> label(above.size(), -1);
    std::vector<std::size_t> stack;
    int best_label = -1;
    std::size_t best_size = 0;
    int32_t next_label = 0;
    for (std::size_t start = 0; start < above.size(); ++start) {
        if (!above[start] || label[start] >= 0) continue;
        std::size_t size = 0;
        stack.clear();
        stack.push_back(start);
        label[start] = next_label;
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            ++size;
            const int x = static_cast<int>(p % w);
            const int y = static_cast<int>(p / w);
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
                    if (above[q] && label[q] < 0) {
                        label[q] = next_label;
                        stack.push_back(q);
                    }
                }
            }
        }
        if (size > best_size) {
            best_size = size;
            best_label = next_label;
        }
        ++next_label;
    }
    std::vector<uint8_t> plane(above.size(), 0);
    for (std::size_t p = 0; p < plane.size(); ++p) {
        plane[p] = (label[p] == best_label) ? 1 : 0;
    }
    return make_fov_mask(std::move(plane), w, h);
}

std::optional<FovMask> erode_mask(const FovMask& mask, int radius) {
    const int w = mask.width;
    const int h = mask.height;
    std::vector<uint8_t> cur = mask.data;
    std::vector<uint8_t> next(cur.size());
    for (int it = 0; it < radius; ++it) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                uint8_t keep = 1;
                for (int dy = -1; dy <= 1 && keep; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx;
                        const int ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h ||
                            !cur[static_cast<std::size_t>(ny) * w + nx]) {
                            keep = 0;
                            break;
                        }
                    }
                }
                next[static_cast<std::size_t>(y) * w + x] = keep;
            }
        }
        cur.swap(next);
    }
    const bool any = std::any_of(cur.begin(), cur.end(), [](uint8_t v) { return v != 0; });
    if (!any) return std::nullopt;
    return make_fov_mask(std::move(cur), w, h);
}

RasterImage crop_resize(const RasterImage& img, const FovMask& mask, int target) {
    if (target < 16) throw std::invalid_argument("crop_resize: target must be >= 16");
    if (mask.width != img.width || mask.height != img.height) {
        throw std::invalid_argument("crop_resize: mask dimensions mismatch");
    }
    const int cw = mask.x1 - mask.x0 + 1;
    const int ch = mask.y1 - mask.y0 + 1;

    RasterImage out;
    out.width = target;
    out.height = target;
    out.data.resize(static_cast<std::size_t>(target) * target * 3);

    const double sx = static_cast<double>(cw) / target;
    const double sy = static_cast<double>(ch) / target;
#pragma omp parallel for num_threads(worker_count()) schedule(static)
    for (int j = 0; j < target; ++j) {
        for (int i = 0; i < target; ++i) {
            // Pixel-center alignment; exact copy when cw == ch == target.
            double fx = (i + 0.5) * sx - 0.5;
            double fy = (j + 0.5) * sy - 0.5;
            fx = std::clamp(fx, 0.0, cw - 1.0);
            fy = std::clamp(fy, 0.0, ch - 1.0);
            const int ix = static_cast<int>(fx);
            const int iy = static_cast<int>(fy);
            const int ix1 = std::min(ix + 1, cw - 1);
            const int iy1 = std::min(iy + 1, ch - 1);
            const double ax = fx - ix;
            const double ay = fy - iy;
            for (int c = 0; c < 3; ++c) {
                const double v00 = img.at(mask.x0 + ix, mask.y0 + iy, c);
                const double v10 = img.at(mask.x0 + ix1, mask.y0 + iy, c);
                const double v01 = img.at(mask.x0 + ix, mask.y0 + iy1, c);
                const double v11 = img.at(mask.x0 + ix1, mask.y0 + iy1, c);
                const double top = v00 + (v10 - v00) * ax;
                const double bot = v01 + (v11 - v01) * ax;
                const double v = top + (bot - top) * ay;
                out.at(i, j, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

std::vector<double> gaussian_kernel_taps(double sigma, int order, double truncation) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian kernel: sigma must be > 0");
    if (order < 0 || order > 2) throw std::invalid_argument("gaussian kernel: order must be 0..2");
    const int r = static_cast<int>(std::ceil(truncation * sigma));
    const int n = 2 * r + 1;
    std::vector<double> k(static_cast<std::size_t>(n), 0.0);
    const double s2 = sigma * sigma;
    const double norm = 1.0 / (sigma * std::sqrt(6.28318530717958647692));
    auto g = [&](double x) { return norm * std::exp(-x * x / (2.0 * s2)); };

    if (order == 0) {
        for (int j = 0; j <= r; ++j) {
            const double v = g(j);
            k[r + j] = v;
            k[r - j] = v;
        }
        double sum = k[r];
        for (int j = 1; j <= r; ++j) sum += 2.0 * k[r + j];
        for (double& v : k) v /= sum;
    } else if (order == 1) {
        // Antisymmetric by construction; correlation with these taps measures +d/dx.
        k[r] = 0.0;
        for (int j = 1; j <= r; ++j) {
            const double v = (j / s2) * g(j);
            k[r + j] = v;
            k[r - j] = -v;
        }
        double m1 = 0.0;
        for (int j = 1; j <= r; ++j) m1 += 2.0 * j * k[r + j];
        for (double& v : k) v /= m1;
    } else {
        for (int j = 0; j <= r; ++j) {
            const double v = ((static_cast<double>(j) * j - s2) / (s2 * s2)) * g(j);
            k[r + j] = v;
            k[r - j] = v;
        }
        // Remove DC so a constant image maps to (numerically) exact zero,
        // then scale the quadratic response to 2.
        double dc = k[r];
        for (int j = 1; j <= r; ++j) dc += 2.0 * k[r + j];
        const double shift = dc / n;
        for (double& v : k) v -= shift;
        double m2 = 0.0;
        for (int j = 1; j <= r; ++j) m2 += static_cast<double>(j) * j * k[r + j];
        for (double& v : k) v /= m2;
    }
    return k;
}

namespace {

// Core pass along x. Symmetric tap pairs are added together before joining the
// accumulator, which keeps odd kernels exactly antisymmetric under direction
// reversal (see header notes on rotation behavior).
void conv_x_into(const GrayImage& in, std::span<const double> taps, GrayImage& out) {
    const int w = in.width;
    const int h = in.height;
    const int r = static_cast<int>((taps.size() - 1) / 2);
    const int lo = std::min(r, w);
    const int hi = std::max(lo, w - r);
#pragma omp parallel for num_threads(worker_count()) schedule(static)
    for (int y = 0; y < h; ++y) {
        const double* row = &in.data[static_cast<std::size_t>(y) * w];
        double* orow = &out.data[static_cast<std::size_t>(y) * w];
        auto reflected = [&](int x) {
            double acc = row[x] * taps[r];
            for (int j = 1; j <= r; ++j) {
                const double a = row[reflect_index(x - j, w)];
                const double b = row[reflect_index(x + j, w)];
                acc += a * taps[r - j] + b * taps[r + j];
            }
            orow[x] = acc;
        };
        for (int x = 0; x < lo; ++x) reflected(x);
        for (int x = lo; x < hi; ++x) {  // interior: same pair order, no reflection
            double acc = row[x] * taps[r];
            for (int j = 1; j <= r; ++j) {
                acc += row[x - j] * taps[r - j] + row[x + j] * taps[r + j];
            }
            orow[x] = acc;
        }
        for (int x = hi; x < w; ++x) reflected(x);
    }
}

void conv_y_into(const GrayImage& in, std::span<const double> taps, GrayImage& out) {
    const int w = in.width;
    const int h = in.height;
    const int r = static_cast<int>((taps.size() - 1) / 2);
#pragma omp parallel for num_threads(worker_count()) schedule(static)
    for (int y = 0; y < h; ++y) {
        double* orow = &out.data[static_cast<std::size_t>(y) * w];
        if (y >= r && y + r < h) {
            const double* base = &in.data[static_cast<std::size_t>(y) * w];
            for (int x = 0; x < w; ++x) {
                double acc = base[x] * taps[r];
                for (int j = 1; j <= r; ++j) {
                    acc += base[x - static_cast<std::ptrdiff_t>(j) * w] * taps[r - j] +
                           base[x + static_cast<std::ptrdiff_t>(j) * w] * taps[r + j];
                }
                orow[x] = acc;
            }
            continue;
        }
        for (int x = 0; x < w; ++x) {
            double acc = in.at(x, y) * taps[r];
            for (int j = 1; j <= r; ++j) {
                const double a = in.at(x, reflect_index(y - j, h));
                const double b = in.at(x, reflect_index(y + j, h));
                acc += a * taps[r - j] + b * taps[r + j];
            }
            orow[x] = acc;
        }
    }
}

}  // namespace

GrayImage convolve_x(const GrayImage& img, std::span<const double> taps) {
    GrayImage out = GrayImage::filled(img.width, img.height, 0.0);
    conv_x_into(img, taps, out);
    return out;
}

GrayImage convolve_y(const GrayImage& img, std::span<const double> taps) {
    GrayImage out = GrayImage::filled(img.width, img.height, 0.0);
    conv_y_into(img, taps, out);
    return out;
}

GrayImage gaussian_derivative(const GrayImage& img, double sigma, int dx, int dy,
                              double truncation) {
    if (dx < 0 || dy < 0 || dx > 2 || dy > 2 || dx + dy > 2) {
        throw std::invalid_argument("gaussian_derivative: orders must satisfy dx,dy in {0,1,2}, dx+dy <= 2");
    }
    const auto kx = gaussian_kernel_taps(sigma, dx, truncation);
    const auto ky = gaussian_kernel_taps(sigma, dy, truncation);
    return convolve_y(convolve_x(img, kx), ky);
}

HessianPlanes hessian_at_scale(const GrayImage& img, double sigma, double truncation) {
    if (!(sigma > 0.0)) throw std::invalid_argument("hessian_at_scale: sigma must be > 0");
    const auto g = gaussian_kernel_taps(sigma, 0, truncation);
    const auto d1 = gaussian_kernel_taps(sigma, 1, truncation);
    const auto d2 = gaussian_kernel_taps(sigma, 2, truncation);

    HessianPlanes out;
    out.ixx = convolve_y(convolve_x(img, d2), g);
    out.iyy = convolve_x(convolve_y(img, d2), g);
    const GrayImage xy = convolve_y(convolve_x(img, d1), d1);
    const GrayImage yx = convolve_x(convolve_y(img, d1), d1);
    out.ixy = GrayImage::filled(img.width, img.height, 0.0);
    for (std::size_t p = 0; p < out.ixy.data.size(); ++p) {
        out.ixy.data[p] = 0.5 * (xy.data[p] + yx.data[p]);
    }

    const double s2 = sigma * sigma;  // gamma = 2 scale normalization
    for (std::size_t p = 0; p < out.ixx.data.size(); ++p) {
        out.ixx.data[p] *= s2;
        out.ixy.data[p] *= s2;
        out.iyy.data[p] *= s2;
    }
    return out;
}

std::vector<Patch> extract_patches(const RasterImage& img, int size, int count, uint64_t seed) {
    if (size < 1 || size > std::min(img.width, img.height)) {
        throw std::invalid_argument("extract_patches: patch size exceeds image");
    }
    if (count < 1) throw std::invalid_argument("extract_patches: count must be >= 1");
    Rng rng(seed);
    const uint64_t nx = static_cast<uint64_t>(img.width - size) + 1;
    const uint64_t ny = static_cast<uint64_t>(img.height - size) + 1;
    std::vector<Patch> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Patch p;
        p.x = static_cast<int>(rng.below(nx));
        p.y = static_cast<int>(rng.below(ny));
        p.image.width = size;
        p.image.height = size;
        p.image.data.resize(static_cast<std::size_t>(size) * size * 3);
        for (int y = 0; y < size; ++y) {
            const float* src = &img.data[(static_cast<std::size_t>(p.y + y) * img.width + p.x) * 3];
            float* dst = &p.image.data[static_cast<std::size_t>(y) * size * 3];
            std::copy(src, src + static_cast<std::size_t>(size) * 3, dst);
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace fundusqa
