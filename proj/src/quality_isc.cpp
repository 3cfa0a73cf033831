#include "fundusqa/quality_isc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "fundusqa/numeric.hpp"
#include "fundusqa/parallel.hpp"
#include "fundusqa/rng.hpp"

namespace fundusqa {

void validate(const IscFeatureConfig& cfg) {
    if (!cfg.include_raw_intensity && (cfg.sigmas.empty() || cfg.derivative_orders.empty())) {
        throw std::invalid_argument("isc features: at least one feature must be enabled");
    }
    for (double s : cfg.sigmas) {
        if (!(s > 0.0)) throw std::invalid_argument("isc features: sigmas must be > 0");
    }
    for (auto [dx, dy] : cfg.derivative_orders) {
        if (dx < 0 || dy < 0 || dx + dy > 1) {
            throw std::invalid_argument("isc features: derivative orders must satisfy dx+dy <= 1");
        }
    }
}

uint64_t feature_config_fingerprint(const IscFeatureConfig& cfg) {
    uint64_t hash = 0xcbf29ce484222325ULL;
    for (double s : cfg.sigmas) hash = fnv1a(&s, sizeof(s), hash);
    for (auto [dx, dy] : cfg.derivative_orders) {
        const int32_t o[2] = {dx, dy};
        hash = fnv1a(o, sizeof(o), hash);
    }
    const uint8_t raw = cfg.include_raw_intensity ? 1 : 0;
    return fnv1a(&raw, 1, hash);
}

FeatureMatrix extract_isc_features(const RasterImage& img, const FovMask& mask,
                                   const IscFeatureConfig& cfg, bool standardize) {
    validate(cfg);
    if (mask.width != img.width || mask.height != img.height) {
        throw std::invalid_argument("extract_isc_features: mask dimensions mismatch");
    }
    std::vector<std::size_t> fov_pixels;
    for (std::size_t p = 0; p < mask.data.size(); ++p) {
        if (mask.data[p]) fov_pixels.push_back(p);
    }
    if (fov_pixels.empty()) throw std::runtime_error("extract_isc_features: empty FOV");

    const int dim = cfg.feature_dim();
    FeatureMatrix features;
    features.rows = static_cast<long long>(fov_pixels.size());
    features.cols = dim;
    features.data.resize(fov_pixels.size() * static_cast<std::size_t>(dim));

    int col = 0;
    for (int c = 0; c < 3; ++c) {
        GrayImage plane;
        plane.width = img.width;
        plane.height = img.height;
        plane.data.resize(img.pixel_count());
        for (std::size_t p = 0; p < img.pixel_count(); ++p) {
            plane.data[p] = static_cast<double>(img.data[p * 3 + c]);
        }
        if (cfg.include_raw_intensity) {
            for (std::size_t r = 0; r < fov_pixels.size(); ++r) {
                features.data[r * dim + col] = plane.data[fov_pixels[r]];
            }
            ++col;
        }
        for (double sigma : cfg.sigmas) {
            for (auto [dx, dy] : cfg.derivative_orders) {
                const GrayImage resp = gaussian_derivative(plane, sigma, dx, dy);
                for (std::size_t r = 0; r < fov_pixels.size(); ++r) {
                    features.data[r * dim + col] = resp.data[fov_pixels[r]];
                }
                ++col;
            }
        }
    }

    if (standardize) {
        const double n = static_cast<double>(features.rows);
        for (int j = 0; j < dim; ++j) {
            double mean = 0.0;
            for (long long r = 0; r < features.rows; ++r) mean += features.at(r, j);
            mean /= n;
            double var = 0.0;
            for (long long r = 0; r < features.rows; ++r) {
                const double d = features.at(r, j) - mean;
                var += d * d;
            }
            var /= n;
            const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
            for (long long r = 0; r < features.rows; ++r) {
                double& v = features.data[static_cast<std::size_t>(r) * dim + j];
                v = (v - mean) * scale;  // zero-variance columns collapse to 0
            }
        }
    }
    return features;
}

namespace {

double dist2(const double* a, const double* b, int dim) {
    double s = 0.0;
    for (int j = 0; j < dim; ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

}  // namespace

ClusterModel kmeans_fit(const FeatureMatrix& samples, int k, uint64_t seed,
                        int max_iter, double tol, KmeansFitInfo* info) {
    if (k < 2) throw std::invalid_argument("kmeans_fit: k must be >= 2");
    if (samples.rows < k) throw std::invalid_argument("kmeans_fit: fewer rows than k");
    const long long n = samples.rows;
    const int dim = samples.cols;

    Rng rng(seed);

    // k-means++ seeding: first center uniform, the rest weighted by the squared
    // distance to the nearest chosen center.
    std::vector<double> centers(static_cast<std::size_t>(k) * dim, 0.0);
    std::vector<double> d2(static_cast<std::size_t>(n),
                           std::numeric_limits<double>::infinity());
    const long long first = static_cast<long long>(rng.below(static_cast<uint64_t>(n)));
    std::copy_n(samples.row(first), dim, centers.begin());
    for (int c = 1; c < k; ++c) {
        const double* prev = &centers[static_cast<std::size_t>(c - 1) * dim];
#pragma omp parallel for num_threads(worker_count()) schedule(static)
        for (long long i = 0; i < n; ++i) {
            const double d = dist2(samples.row(i), prev, dim);
            if (d < d2[i]) d2[i] = d;
        }
        double total = 0.0;
        for (long long i = 0; i < n; ++i) total += d2[i];
        if (!(total > 0.0)) {
            throw std::invalid_argument("kmeans_fit: fewer distinct rows than k");
        }
        const double u = rng.uniform() * total;
        double acc = 0.0;
        long long chosen = -1;
        for (long long i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc > u) {
                chosen = i;
                break;
            }
        }
        if (chosen < 0) {  // rounding slack: fall back to the last weighted row
            for (long long i = n - 1; i >= 0; --i) {
                if (d2[i] > 0.0) {
                    chosen = i;
                    break;
                }
            }
        }
        std::copy_n(samples.row(chosen), dim, centers.begin() + static_cast<std::size_t>(c) * dim);
    }
    return kmeans_fit_warm(samples, k, std::move(centers), max_iter, tol, info);
}

ClusterModel kmeans_fit_warm(const FeatureMatrix& samples, int k,
                             std::vector<double> initial_centers, int max_iter,
                             double tol, KmeansFitInfo* info) {
    if (k < 2) throw std::invalid_argument("kmeans: k must be >= 2");
    if (samples.rows < k) throw std::invalid_argument("kmeans: fewer rows than k");
    if (max_iter < 1) throw std::invalid_argument("kmeans: max_iter must be >= 1");
    const long long n = samples.rows;
    const int dim = samples.cols;
    if (initial_centers.size() != static_cast<std::size_t>(k) * dim) {
        throw std::invalid_argument("kmeans: initial center shape mismatch");
    }

    ClusterModel model;
    model.k = k;
    model.feature_dim = dim;
    model.centers = std::move(initial_centers);

    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    std::vector<double> best_d2(static_cast<std::size_t>(n), 0.0);
    std::vector<double> means(static_cast<std::size_t>(k) * dim, 0.0);
    std::vector<long long> counts(static_cast<std::size_t>(k), 0);
    KmeansFitInfo local_info;
    KmeansFitInfo& fit = info ? *info : local_info;
    fit = KmeansFitInfo{};

    for (int iter = 0; iter < max_iter; ++iter) {
#pragma omp parallel for num_threads(worker_count()) schedule(static)
        for (long long i = 0; i < n; ++i) {
            int best = 0;
            double bd = dist2(samples.row(i), model.center(0), dim);
            for (int c = 1; c < k; ++c) {
                const double d = dist2(samples.row(i), model.center(c), dim);
                if (d < bd) {  // strict: ties keep the lowest index
                    bd = d;
                    best = c;
                }
            }
            assign[i] = best;
            best_d2[i] = bd;
        }
        double inertia = 0.0;
        for (long long i = 0; i < n; ++i) inertia += best_d2[i];
        fit.inertia_history.push_back(inertia);
        fit.iterations = iter + 1;

        // Running means in fixed row order: a cluster of identical points
        // lands exactly on that point, and the result never depends on the
        // thread count.
        std::fill(means.begin(), means.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (long long i = 0; i < n; ++i) {
            const int c = assign[i];
            const double* row = samples.row(i);
            double* m = &means[static_cast<std::size_t>(c) * dim];
            const double inv = 1.0 / static_cast<double>(++counts[c]);
            for (int j = 0; j < dim; ++j) m[j] += (row[j] - m[j]) * inv;
        }

        double max_move2 = 0.0;
        std::vector<char> consumed(static_cast<std::size_t>(n), 0);
        int repairs = 0;
        for (int c = 0; c < k; ++c) {
            double* ctr = &model.centers[static_cast<std::size_t>(c) * dim];
            if (counts[c] > 0) {
                double move2 = 0.0;
                for (int j = 0; j < dim; ++j) {
                    const double nv = means[static_cast<std::size_t>(c) * dim + j];
                    const double d = nv - ctr[j];
                    move2 += d * d;
                    ctr[j] = nv;
                }
                max_move2 = std::max(max_move2, move2);
            } else if (repairs < k) {
                // Re-seed to the point farthest from its assigned center.
                long long far_idx = -1;
                double far_d2 = -1.0;
                for (long long i = 0; i < n; ++i) {
                    if (!consumed[i] && best_d2[i] > far_d2) {
                        far_d2 = best_d2[i];
                        far_idx = i;
                    }
                }
                std::copy_n(samples.row(far_idx), dim, ctr);
                consumed[far_idx] = 1;
                ++repairs;
                ++fit.repairs;
                max_move2 = std::numeric_limits<double>::infinity();
            }
        }
        if (max_move2 < tol * tol && repairs == 0) break;
    }
    model.config_fingerprint = 0;
    return model;
}

std::vector<int> kmeans_assign(const FeatureMatrix& samples, const ClusterModel& model) {
    if (samples.cols != model.feature_dim) {
        throw std::invalid_argument("kmeans_assign: feature dimension mismatch");
    }
    std::vector<int> assign(static_cast<std::size_t>(samples.rows), 0);
#pragma omp parallel for num_threads(worker_count()) schedule(static)
    for (long long i = 0; i < samples.rows; ++i) {
        int best = 0;
        double bd = dist2(samples.row(i), model.center(0), model.feature_dim);
        for (int c = 1; c < model.k; ++c) {
            const double d = dist2(samples.row(i), model.center(c), model.feature_dim);
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        assign[i] = best;
    }
    return assign;
}

IscHistogram isc_histogram(const FeatureMatrix& samples, const ClusterModel& model) {
    if (samples.rows < 1) throw std::invalid_argument("isc_histogram: empty sample");
    const auto assign = kmeans_assign(samples, model);
    std::vector<long long> counts(static_cast<std::size_t>(model.k), 0);
    for (int a : assign) ++counts[a];
    IscHistogram hist;
    hist.counts.resize(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c) {
        hist.counts[c] = static_cast<double>(counts[c]) / static_cast<double>(samples.rows);
    }
    return hist;
}

namespace {

double svm_objective_impl(const std::vector<IscHistogram>& xs, const std::vector<double>& ys,
                          double lambda_r, const std::vector<double>& w, double b) {
    const std::size_t n = xs.size();
    const std::size_t d = w.size();
    const double wnorm2 = pairwise_reduce(0, d, [&](std::size_t j) { return w[j] * w[j]; });
    const double hinge = pairwise_reduce(0, n, [&](std::size_t i) {
        double dot = b;
        for (std::size_t j = 0; j < d; ++j) dot += w[j] * xs[i].counts[j];
        const double m = ys[i] * dot;
        return m < 1.0 ? 1.0 - m : 0.0;
    });
    return 0.5 * lambda_r * wnorm2 + hinge / static_cast<double>(n);
}

// Sigmoid fit on decision values (Lin & Weng's stabilized Newton iteration).
void fit_sigmoid(const std::vector<double>& margins, const std::vector<double>& ys,
                 double& slope, double& intercept) {
    const std::size_t n = margins.size();
    double prior1 = 0.0, prior0 = 0.0;
    for (double y : ys) (y > 0.0 ? prior1 : prior0) += 1.0;
    const double hi = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo = 1.0 / (prior0 + 2.0);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = ys[i] > 0.0 ? hi : lo;

    double a = 0.0;
    double b = std::log((prior0 + 1.0) / (prior1 + 1.0));
    auto objective = [&](double A, double B) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double f = A * margins[i] + B;
            if (f >= 0.0) {
                sum += t[i] * f + std::log1p(std::exp(-f));
            } else {
                sum += (t[i] - 1.0) * f + std::log1p(std::exp(f));
            }
        }
        return sum;
    };
    double fval = objective(a, b);
    constexpr double kSigma = 1e-12;
    for (int it = 0; it < 100; ++it) {
        double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double f = a * margins[i] + b;
            double p, q;
            if (f >= 0.0) {
                const double e = std::exp(-f);
                p = e / (1.0 + e);
                q = 1.0 / (1.0 + e);
            } else {
                const double e = std::exp(f);
                p = 1.0 / (1.0 + e);
                q = e / (1.0 + e);
            }
            const double pq = p * q;
            h11 += margins[i] * margins[i] * pq;
            h22 += pq;
            h21 += margins[i] * pq;
            const double d = t[i] - p;
            g1 += margins[i] * d;
            g2 += d;
        }
        if (std::fabs(g1) < 1e-10 && std::fabs(g2) < 1e-10) break;
        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;
        double step = 1.0;
        bool moved = false;
        while (step >= 1e-10) {
            const double na = a + step * da;
            const double nb = b + step * db;
            const double nf = objective(na, nb);
            if (nf < fval + 1e-4 * step * gd) {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if (!moved) break;
    }
    // Model parameterization P = 1/(1 + exp(A f + B)); report the increasing form.
    slope = -a;
    intercept = -b;
    if (!(slope > 0.0)) slope = 1e-9;
}

}  // namespace

SvmModel svm_train(const std::vector<IscHistogram>& histograms,
                   const std::vector<int>& labels, double c_reg, int epochs,
                   uint64_t seed) {
    (void)seed;  // the full-batch schedule has no stochastic component
    if (histograms.size() != labels.size()) {
        throw std::invalid_argument("svm_train: histogram/label count mismatch");
    }
    if (histograms.size() < 2) throw std::invalid_argument("svm_train: need at least 2 examples");
    if (!(c_reg > 0.0)) throw std::invalid_argument("svm_train: c_reg must be > 0");
    if (epochs < 1) throw std::invalid_argument("svm_train: epochs must be >= 1");
    bool has_pos = false, has_neg = false;
    for (int l : labels) (l ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) {
        throw std::invalid_argument("svm_train: both classes must be present");
    }
    const std::size_t n = histograms.size();
    const std::size_t d = histograms[0].counts.size();
    for (const auto& hst : histograms) {
        if (hst.counts.size() != d) throw std::invalid_argument("svm_train: histogram dimension mismatch");
    }
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = labels[i] ? 1.0 : -1.0;

    const double lambda_r = 1.0 / c_reg;
    std::vector<double> w(d, 0.0);
    double b = 0.0;
    double obj = svm_objective_impl(histograms, ys, lambda_r, w, b);
    double step = 1.0;
    std::vector<double> gw(d), nw(d);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t j = 0; j < d; ++j) {
            gw[j] = lambda_r * w[j] +
                    pairwise_reduce(0, n, [&](std::size_t i) {
                        double dot = b;
                        for (std::size_t jj = 0; jj < d; ++jj) dot += w[jj] * histograms[i].counts[jj];
                        return ys[i] * dot < 1.0 ? -ys[i] * histograms[i].counts[j] : 0.0;
                    }) / static_cast<double>(n);
        }
        const double gb = pairwise_reduce(0, n, [&](std::size_t i) {
            double dot = b;
            for (std::size_t jj = 0; jj < d; ++jj) dot += w[jj] * histograms[i].counts[jj];
            return ys[i] * dot < 1.0 ? -ys[i] : 0.0;
        }) / static_cast<double>(n);

        bool accepted = false;
        for (int half = 0; half < 60; ++half) {
            for (std::size_t j = 0; j < d; ++j) nw[j] = w[j] - step * gw[j];
            const double nb = b - step * gb;
            const double nobj = svm_objective_impl(histograms, ys, lambda_r, nw, nb);
            if (nobj <= obj) {
                w.swap(nw);
                b = nb;
                obj = nobj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // no descent direction at float resolution
        step = std::min(step * 2.0, 1e6);
    }

    SvmModel model;
    model.weights = std::move(w);
    model.bias = b;
    std::vector<double> margins(n);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = model.bias;
        for (std::size_t j = 0; j < d; ++j) dot += model.weights[j] * histograms[i].counts[j];
        margins[i] = dot;
    }
    fit_sigmoid(margins, ys, model.calib_slope, model.calib_intercept);
    return model;
}

double svm_decision(const SvmModel& model, const IscHistogram& hist) {
    if (hist.counts.size() != model.weights.size()) {
        throw std::invalid_argument("svm_decision: dimension mismatch");
    }
    double dot = model.bias;
    for (std::size_t j = 0; j < model.weights.size(); ++j) {
        dot += model.weights[j] * hist.counts[j];
    }
    return dot;
}

double svm_probability(const SvmModel& model, const IscHistogram& hist) {
    const double z = model.calib_slope * svm_decision(model, hist) + model.calib_intercept;
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double svm_objective(const std::vector<IscHistogram>& histograms,
                     const std::vector<int>& labels, double c_reg,
                     const SvmModel& model) {
    std::vector<double> ys(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) ys[i] = labels[i] ? 1.0 : -1.0;
    return svm_objective_impl(histograms, ys, 1.0 / c_reg, model.weights, model.bias);
}

double isc_score(const RasterImage& img, const FovMask& mask, const ClusterModel& cluster,
                 const SvmModel& svm, const IscFeatureConfig& cfg) {
    if (cluster.config_fingerprint != feature_config_fingerprint(cfg)) {
        throw std::invalid_argument("isc_score: feature config fingerprint mismatch");
    }
    if (svm.weights.size() != static_cast<std::size_t>(cluster.k)) {
        throw std::invalid_argument("isc_score: SVM weight dimension mismatch");
    }
    const FeatureMatrix features = extract_isc_features(img, mask, cfg);
    const IscHistogram hist = isc_histogram(features, cluster);
    return svm_probability(svm, hist);
}

FeatureMatrix sample_rows(const FeatureMatrix& samples, long long max_rows, uint64_t seed) {
    if (samples.rows <= max_rows) return samples;
    std::vector<long long> idx(static_cast<std::size_t>(samples.rows));
    for (long long i = 0; i < samples.rows; ++i) idx[i] = i;
    Rng rng(seed);
    FeatureMatrix out;
    out.rows = max_rows;
    out.cols = samples.cols;
    out.data.resize(static_cast<std::size_t>(max_rows) * samples.cols);
    for (long long i = 0; i < max_rows; ++i) {
        const long long pick = i + static_cast<long long>(
                                       rng.below(static_cast<uint64_t>(samples.rows - i)));
        std::swap(idx[i], idx[pick]);
        std::copy_n(samples.row(idx[i]), samples.cols,
                    out.data.begin() + static_cast<std::size_t>(i) * samples.cols);
    }
    return out;
}

IscModel train_isc_model(const std::vector<RasterImage>& images,
                         const std::vector<int>& labels, const IscFeatureConfig& cfg,
                         const IscTrainOptions& opts) {
    if (images.size() != labels.size() || images.empty()) {
        throw std::invalid_argument("train_isc_model: image/label count mismatch");
    }
    validate(cfg);
    const int dim = cfg.feature_dim();

    auto mask_for = [&](const RasterImage& img) {
        try {
            return detect_fov(img, opts.fov_threshold);
        } catch (const std::runtime_error&) {
            return FovMask::full(img.width, img.height);
        }
    };

    const long long per_image = std::min<long long>(opts.sample_per_image, 50000);
    FeatureMatrix pool;
    pool.cols = dim;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const FovMask mask = mask_for(images[i]);
        const FeatureMatrix features = extract_isc_features(images[i], mask, cfg);
        const FeatureMatrix sub =
            sample_rows(features, per_image, opts.seed ^ fnv1a(&i, sizeof(i)));
        pool.data.insert(pool.data.end(), sub.data.begin(), sub.data.end());
        pool.rows += sub.rows;
    }

    IscModel model;
    model.cfg = cfg;
    model.cluster = kmeans_fit(pool, opts.k, opts.seed);
    model.cluster.config_fingerprint = feature_config_fingerprint(cfg);

    std::vector<IscHistogram> histograms;
    histograms.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const FovMask mask = mask_for(images[i]);
        const FeatureMatrix features = extract_isc_features(images[i], mask, cfg);
        histograms.push_back(isc_histogram(features, model.cluster));
    }
    model.svm = svm_train(histograms, labels, opts.c_reg, opts.epochs, opts.seed);
    return model;
}

namespace {

void put_u8(std::string& out, uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    uint8_t u8() {
        if (pos + 1 > buf.size()) throw std::runtime_error("isc model: truncated file");
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint32_t u32() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
        return v;
    }
    uint64_t u64() {
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(u8()) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
};

constexpr char kMagic[5] = {'I', 'S', 'C', 'M', '1'};

}  // namespace

void save_isc_model(const IscModel& model, const std::string& path) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u8(out, 1);  // layout version
    put_u64(out, feature_config_fingerprint(model.cfg));
    put_u8(out, model.cfg.include_raw_intensity ? 1 : 0);
    put_u32(out, static_cast<uint32_t>(model.cfg.sigmas.size()));
    for (double s : model.cfg.sigmas) put_f64(out, s);
    put_u32(out, static_cast<uint32_t>(model.cfg.derivative_orders.size()));
    for (auto [dx, dy] : model.cfg.derivative_orders) {
        put_u32(out, static_cast<uint32_t>(dx));
        put_u32(out, static_cast<uint32_t>(dy));
    }
    put_u32(out, static_cast<uint32_t>(model.cluster.k));
    put_u32(out, static_cast<uint32_t>(model.cluster.feature_dim));
    for (double v : model.cluster.centers) put_f64(out, v);
    put_u32(out, static_cast<uint32_t>(model.svm.weights.size()));
    for (double v : model.svm.weights) put_f64(out, v);
    put_f64(out, model.svm.bias);
    put_f64(out, model.svm.calib_slope);
    put_f64(out, model.svm.calib_intercept);

    std::ofstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error(path + ": cannot open for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw std::runtime_error(path + ": write failed");
}

IscModel load_isc_model(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error(path + ": cannot open");
    std::string buf((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error(path + ": not an ISCM1 model file");
    }
    Reader r{buf, sizeof(kMagic)};
    if (r.u8() != 1) throw std::runtime_error(path + ": unsupported model layout version");

    IscModel model;
    const uint64_t stored_fingerprint = r.u64();
    model.cfg.include_raw_intensity = r.u8() != 0;
    model.cfg.sigmas.resize(r.u32());
    for (double& s : model.cfg.sigmas) s = r.f64();
    model.cfg.derivative_orders.resize(r.u32());
    for (auto& [dx, dy] : model.cfg.derivative_orders) {
        dx = static_cast<int>(r.u32());
        dy = static_cast<int>(r.u32());
    }
    if (feature_config_fingerprint(model.cfg) != stored_fingerprint) {
        throw std::runtime_error(path + ": feature config fingerprint mismatch");
    }
    model.cluster.k = static_cast<int>(r.u32());
    model.cluster.feature_dim = static_cast<int>(r.u32());
    if (model.cluster.k < 2 || model.cluster.feature_dim != model.cfg.feature_dim()) {
        throw std::runtime_error(path + ": inconsistent cluster shape");
    }
    model.cluster.centers.resize(static_cast<std::size_t>(model.cluster.k) *
                                 model.cluster.feature_dim);
    for (double& v : model.cluster.centers) v = r.f64();
    model.cluster.config_fingerprint = stored_fingerprint;
    model.svm.weights.resize(r.u32());
    for (double& v : model.svm.weights) v = r.f64();
    model.svm.bias = r.f64();
    model.svm.calib_slope = r.f64();
    model.svm.calib_intercept = r.f64();
    if (r.pos != buf.size()) throw std::runtime_error(path + ": trailing bytes");
    return model;
}

}  // namespace fundusqa
