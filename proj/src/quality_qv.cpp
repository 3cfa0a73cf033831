#include "fundusqa/quality_qv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fundusqa/numeric.hpp"
#include "fundusqa/parallel.hpp"

namespace fundusqa {

AnisotropyField local_svd_anisotropy(const GrayImage& green, int window) {
    if (window < 3 || window % 2 == 0 || window > std::min(green.width, green.height)) {
        throw std::invalid_argument("local_svd_anisotropy: window must be odd, >= 3, and fit the image");
    }
    const int w = green.width;
    const int h = green.height;
    const int half = window / 2;

    // Central-difference gradients with reflected borders.
    GrayImage gx = GrayImage::filled(w, h, 0.0);
    GrayImage gy = GrayImage::filled(w, h, 0.0);
#pragma omp parallel for num_threads(worker_count()) schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            gx.at(x, y) = 0.5 * (green.at(reflect_index(x + 1, w), y) -
                                 green.at(reflect_index(x - 1, w), y));
            gy.at(x, y) = 0.5 * (green.at(x, reflect_index(y + 1, h)) -
                                 green.at(x, reflect_index(y - 1, h)));
        }
    }

    AnisotropyField field;
    field.width = w;
    field.height = h;
    field.data.assign(static_cast<std::size_t>(w) * h, 0.0);

#pragma omp parallel for num_threads(worker_count()) schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // One-sided Jacobi on the stacked n x 2 gradient matrix: the Gram
            // entries give the rotation that orthogonalizes the columns, and
            // the singular values are the rotated column norms. Accumulating
            // those norms from the gradients themselves keeps the small
            // singular value accurate on (near-)rank-1 windows, where an
            // eigenvalue route loses half the digits to cancellation.
            const bool interior =
                x >= half && x + half < w && y >= half && y + half < h;
            double sxx = 0.0, sxy = 0.0, syy = 0.0;
            for (int dv = -half; dv <= half; ++dv) {
                const int yy = interior ? y + dv : reflect_index(y + dv, h);
                const double* grow = &gx.data[static_cast<std::size_t>(yy) * w];
                const double* hrow = &gy.data[static_cast<std::size_t>(yy) * w];
                for (int du = -half; du <= half; ++du) {
                    const int xx = interior ? x + du : reflect_index(x + du, w);
                    const double u = grow[xx];
                    const double v = hrow[xx];
                    sxx += u * u;
                    sxy += u * v;
                    syy += v * v;
                }
            }
            double cs = 1.0, sn = 0.0;
            if (sxy != 0.0) {
                const double zeta = (syy - sxx) / (2.0 * sxy);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                cs = 1.0 / std::sqrt(1.0 + t * t);
                sn = cs * t;
            }
            double na = 0.0, nb = 0.0;
            for (int dv = -half; dv <= half; ++dv) {
                const int yy = interior ? y + dv : reflect_index(y + dv, h);
                const double* grow = &gx.data[static_cast<std::size_t>(yy) * w];
                const double* hrow = &gy.data[static_cast<std::size_t>(yy) * w];
                for (int du = -half; du <= half; ++du) {
                    const int xx = interior ? x + du : reflect_index(x + du, w);
                    const double u = grow[xx];
                    const double v = hrow[xx];
                    const double ru = cs * u - sn * v;
                    const double rv = sn * u + cs * v;
                    na += ru * ru;
                    nb += rv * rv;
                }
            }
            const double s1 = std::sqrt(std::max(na, nb));
            const double s2 = std::sqrt(std::min(na, nb));
            const double den = s1 + s2;
            field.data[static_cast<std::size_t>(y) * w + x] =
                den < kAnisotropyEps ? 0.0 : (s1 - s2) / den;
        }
    }
    return field;
}

uint64_t qv_params_fingerprint(const FrangiParams& params, int window) {
    uint64_t hash = 0xcbf29ce484222325ULL;
    auto mix_double = [&hash](double v) {
        hash = fnv1a(&v, sizeof(v), hash);
    };
    for (double s : params.scales.sigmas) mix_double(s);
    mix_double(params.scales.truncation_radius);
    mix_double(params.beta);
    mix_double(params.c);
    const uint8_t bright = params.bright_ridges ? 1 : 0;
    hash = fnv1a(&bright, 1, hash);
    const int64_t win = window;
    hash = fnv1a(&win, sizeof(win), hash);
    return hash;
}

QvReport qv_score(const RasterImage& img, const FrangiParams& params, int window) {
    QvReport report;
    report.params_fingerprint = qv_params_fingerprint(params, window);

    std::optional<FovMask> fov;
    try {
        fov = erode_mask(detect_fov(img), kFovErosionRadius);
    } catch (const std::runtime_error&) {
        fov.reset();  // no field of view at all
    }
    if (!fov) return report;

    GrayImage g = green_channel(img);
    const GrayImage& for_anisotropy = g;
    GrayImage for_vessels = params.bright_ridges ? complement(g) : g;
    FrangiParams bright = params;
    bright.bright_ridges = true;
    const VesselProbabilityMap vessels = frangi_vesselness(for_vessels, bright);
    const AnisotropyField coherence = local_svd_anisotropy(for_anisotropy, window);

    const int w = img.width;
    const int h = img.height;
    std::vector<double> row_num(static_cast<std::size_t>(h), 0.0);
    std::vector<double> row_den(static_cast<std::size_t>(h), 0.0);
    std::vector<long long> row_cnt(static_cast<std::size_t>(h), 0);
#pragma omp parallel for num_threads(worker_count()) schedule(static)
    for (int y = 0; y < h; ++y) {
        double num = 0.0, den = 0.0;
        long long cnt = 0;
        for (int x = 0; x < w; ++x) {
            if (!fov->at(x, y)) continue;
            const double v = vessels.at(x, y);
            num += v * coherence.at(x, y);
            den += v;
            if (v > 0.0) ++cnt;
        }
        row_num[y] = num;
        row_den[y] = den;
        row_cnt[y] = cnt;
    }
    // Row partials joined serially so the score never depends on thread count.
    double num = 0.0, den = 0.0;
    long long cnt = 0;
    for (int y = 0; y < h; ++y) {
        num += row_num[y];
        den += row_den[y];
        cnt += row_cnt[y];
    }
    if (den < kAnisotropyEps) return report;
    report.score = std::clamp(num / den, 0.0, 1.0);
    report.vessel_pixel_count = cnt;
    return report;
}

}  // namespace fundusqa
