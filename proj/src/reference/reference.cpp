#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fundusqa::reference {

namespace {

// Independent kernel sampling; same analytic formulas and normalization rules
// as the production taps, assembled without sharing code.
std::vector<double> sample_taps(double sigma, int order, double truncation) {
    const int r = static_cast<int>(std::ceil(truncation * sigma));
    const int n = 2 * r + 1;
    std::vector<double> k(static_cast<std::size_t>(n));
    const double s2 = sigma * sigma;
    for (int j = -r; j <= r; ++j) {
        const double g = std::exp(-j * j / (2.0 * s2)) / (sigma * std::sqrt(2.0 * M_PI));
        double v = g;
        if (order == 1) v = (j / s2) * g;
        if (order == 2) v = ((static_cast<double>(j) * j - s2) / (s2 * s2)) * g;
        k[r + j] = v;
    }
    if (order == 0) {
        const double sum = std::accumulate(k.begin(), k.end(), 0.0);
        for (double& v : k) v /= sum;
    } else if (order == 1) {
        double m1 = 0.0;
        for (int j = -r; j <= r; ++j) m1 += j * k[r + j];
        for (double& v : k) v /= m1;
    } else {
        const double dc = std::accumulate(k.begin(), k.end(), 0.0);
        for (double& v : k) v -= dc / n;
        double m2 = 0.0;
        for (int j = -r; j <= r; ++j) m2 += 0.5 * j * j * k[r + j];
        for (double& v : k) v /= m2;
    }
    return k;
}

int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

}  // namespace

GrayImage gaussian_derivative_direct(const GrayImage& img, double sigma, int dx, int dy,
                                     double truncation) {
    const auto kx = sample_taps(sigma, dx, truncation);
    const auto ky = sample_taps(sigma, dy, truncation);
    const int r = static_cast<int>(kx.size() / 2);
    GrayImage out = GrayImage::filled(img.width, img.height, 0.0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int v = -r; v <= r; ++v) {
                const int yy = reflect(y + v, img.height);
                for (int u = -r; u <= r; ++u) {
                    const int xx = reflect(x + u, img.width);
                    acc += kx[r + u] * ky[r + v] * img.at(xx, yy);
                }
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

GrayImage gaussian_blur_serial(const GrayImage& img, double sigma, double truncation) {
    const auto k = sample_taps(sigma, 0, truncation);
    const int r = static_cast<int>(k.size() / 2);
    GrayImage tmp = GrayImage::filled(img.width, img.height, 0.0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int u = -r; u <= r; ++u) acc += k[r + u] * img.at(reflect(x + u, img.width), y);
            tmp.at(x, y) = acc;
        }
    }
    GrayImage out = GrayImage::filled(img.width, img.height, 0.0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int v = -r; v <= r; ++v) acc += k[r + v] * tmp.at(x, reflect(y + v, img.height));
            out.at(x, y) = acc;
        }
    }
    return out;
}

VesselProbabilityMap frangi_vesselness_serial(const GrayImage& green,
                                              const FrangiParams& params) {
    GrayImage work = green;
    if (!params.bright_ridges) {
        for (double& v : work.data) v = 1.0 - v;
    }
    for (double& v : work.data) v *= 100.0;

    VesselProbabilityMap map;
    map.width = green.width;
    map.height = green.height;
    map.data.assign(work.data.size(), 0.0);

    const int w = green.width;
    const int h = green.height;
    for (double sigma : params.scales.sigmas) {
        const auto g = sample_taps(sigma, 0, params.scales.truncation_radius);
        const auto d1 = sample_taps(sigma, 1, params.scales.truncation_radius);
        const auto d2 = sample_taps(sigma, 2, params.scales.truncation_radius);
        const int r = static_cast<int>(g.size() / 2);
        auto conv = [&](const std::vector<double>& kx, const std::vector<double>& ky) {
            GrayImage tmp = GrayImage::filled(w, h, 0.0);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (int u = -r; u <= r; ++u) acc += kx[r + u] * work.at(reflect(x + u, w), y);
                    tmp.at(x, y) = acc;
                }
            }
            GrayImage out = GrayImage::filled(w, h, 0.0);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (int v = -r; v <= r; ++v) acc += ky[r + v] * tmp.at(x, reflect(y + v, h));
                    out.at(x, y) = acc;
                }
            }
            return out;
        };
        const GrayImage ixx = conv(d2, g);
        const GrayImage iyy = conv(g, d2);
        const GrayImage ixy = conv(d1, d1);
        const double s2 = sigma * sigma;
        for (std::size_t p = 0; p < map.data.size(); ++p) {
            const double a = ixx.data[p] * s2;
            const double bxy = ixy.data[p] * s2;
            const double c = iyy.data[p] * s2;
            const double disc = std::sqrt((a - c) * (a - c) + 4.0 * bxy * bxy);
            const double mu1 = 0.5 * (a + c + disc);
            const double mu2 = 0.5 * (a + c - disc);
            double l1 = mu1, l2 = mu2;
            if (std::fabs(l1) > std::fabs(l2)) std::swap(l1, l2);
            if (!(l2 < 0.0)) continue;
            const double rb = l1 / l2;
            const double s = l1 * l1 + l2 * l2;
            const double v = std::exp(-rb * rb / (2.0 * params.beta * params.beta)) *
                             (1.0 - std::exp(-s / (2.0 * params.c * params.c)));
            map.data[p] = std::max(map.data[p], v);
        }
    }
    return map;
}

std::vector<double> anisotropy_serial(const GrayImage& green, int window) {
    const int w = green.width;
    const int h = green.height;
    const int half = window / 2;
    std::vector<double> gx(static_cast<std::size_t>(w) * h);
    std::vector<double> gy(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            gx[static_cast<std::size_t>(y) * w + x] =
                0.5 * (green.at(reflect(x + 1, w), y) - green.at(reflect(x - 1, w), y));
            gy[static_cast<std::size_t>(y) * w + x] =
                0.5 * (green.at(x, reflect(y + 1, h)) - green.at(x, reflect(y - 1, h)));
        }
    }
    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    std::vector<double> u(static_cast<std::size_t>(window) * window);
    std::vector<double> v(static_cast<std::size_t>(window) * window);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::size_t m = 0;
            for (int dv = -half; dv <= half; ++dv) {
                for (int du = -half; du <= half; ++du) {
                    const int xx = reflect(x + du, w);
                    const int yy = reflect(y + dv, h);
                    u[m] = gx[static_cast<std::size_t>(yy) * w + xx];
                    v[m] = gy[static_cast<std::size_t>(yy) * w + xx];
                    ++m;
                }
            }
            // Assembled-matrix SVD through the normal equations in extended
            // precision: singular values are the square roots of the 2x2
            // Gram eigenvalues.
            long double a = 0.0L, b = 0.0L, c = 0.0L;
            for (std::size_t i = 0; i < m; ++i) {
                const long double ui = u[i];
                const long double vi = v[i];
                a += ui * ui;
                b += vi * vi;
                c += ui * vi;
            }
            const long double tr = a + b;
            const long double df = a - b;
            const long double disc = sqrtl(df * df + 4.0L * c * c);
            const long double mu1 = std::max((tr + disc) / 2.0L, 0.0L);
            const long double mu2 = std::max((tr - disc) / 2.0L, 0.0L);
            double s1 = static_cast<double>(sqrtl(mu1));
            double s2 = static_cast<double>(sqrtl(mu2));
            if (s2 > s1) std::swap(s1, s2);
            const double den = s1 + s2;
            out[static_cast<std::size_t>(y) * w + x] = den < 1e-12 ? 0.0 : (s1 - s2) / den;
        }
    }
    return out;
}

double auc_pair_count(std::span<const double> scores, std::span<const int> labels) {
    double wins = 0.0;
    long long pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        ++pos;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    for (int l : labels) neg += l ? 0 : 1;
    if (pos == 0 || neg == 0) throw std::invalid_argument("auc_pair_count: both classes required");
    return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

YoudenOracle youden_exhaustive(std::span<const double> scores, std::span<const int> labels) {
    std::vector<double> distinct(scores.begin(), scores.end());
    std::sort(distinct.begin(), distinct.end(), std::greater<>());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    long long pos = 0, neg = 0;
    for (int l : labels) (l ? pos : neg)++;

    YoudenOracle best;
    double best_tpr = -1.0;
    bool have = false;
    for (std::size_t i = 0; i < distinct.size(); ++i) {
        const double s = distinct[i];
        long long tp = 0, fp = 0;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (scores[j] >= s) (labels[j] ? tp : fp)++;
        }
        const double tpr = static_cast<double>(tp) / pos;
        const double fpr = static_cast<double>(fp) / neg;
        const double jstat = tpr - fpr;
        const double reported = i + 1 < distinct.size() ? 0.5 * (s + distinct[i + 1]) : s;
        const bool better = !have || jstat > best.j_statistic ||
                            (jstat == best.j_statistic &&
                             (tpr > best_tpr ||
                              (tpr == best_tpr && reported < best.threshold)));
        if (better) {
            best = {reported, jstat};
            best_tpr = tpr;
            have = true;
        }
    }
    return best;
}

namespace {

double t_density(double x, double v, double log_norm) {
    return std::exp(log_norm - 0.5 * (v + 1.0) * std::log1p(x * x / v));
}

double simpson(double a, double b, double fa, double fm, double fb, double whole,
               double v, double log_norm, double eps, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = t_density(lm, v, log_norm);
    const double frm = t_density(rm, v, log_norm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * eps) {
        return left + right + (left + right - whole) / 15.0;
    }
    return simpson(a, m, fa, flm, fm, left, v, log_norm, eps / 2.0, depth - 1) +
           simpson(m, b, fm, frm, fb, right, v, log_norm, eps / 2.0, depth - 1);
}

}  // namespace

double t_two_tailed_p_quadrature(double t, long long df) {
    if (t == 0.0) return 1.0;
    const double v = static_cast<double>(df);
    const double log_norm = std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v) -
                            0.5 * std::log(v * M_PI);
    const double a = 0.0;
    const double b = std::fabs(t);
    const double fa = t_density(a, v, log_norm);
    const double fb = t_density(b, v, log_norm);
    const double fm = t_density(0.5 * (a + b), v, log_norm);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double integral = simpson(a, b, fa, fm, fb, whole, v, log_norm, 1e-13, 40);
    return std::clamp(1.0 - 2.0 * integral, 0.0, 1.0);
}

double kmeans_inertia_brute(const FeatureMatrix& samples, const ClusterModel& model) {
    double total = 0.0;
    for (long long i = 0; i < samples.rows; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int c = 0; c < model.k; ++c) {
            double d = 0.0;
            const double* row = samples.row(i);
            const double* ctr = model.center(c);
            for (int j = 0; j < model.feature_dim; ++j) {
                const double diff = row[j] - ctr[j];
                d += diff * diff;
            }
            best = std::min(best, d);
        }
        total += best;
    }
    return total;
}

std::vector<int> kmeans_assign_serial(const FeatureMatrix& samples, const ClusterModel& model) {
    std::vector<int> assign(static_cast<std::size_t>(samples.rows), 0);
    for (long long i = 0; i < samples.rows; ++i) {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < model.k; ++c) {
            double d = 0.0;
            const double* row = samples.row(i);
            const double* ctr = model.center(c);
            for (int j = 0; j < model.feature_dim; ++j) {
                const double diff = row[j] - ctr[j];
                d += diff * diff;
            }
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        assign[i] = best;
    }
    return assign;
}

}  // namespace fundusqa::reference
