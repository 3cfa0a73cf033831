#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fundusqa/raster.hpp"

namespace fundusqa {

// Per-channel pixel features: optional raw intensity plus Gaussian-derivative
// responses for each (sigma, order) combination.
struct IscFeatureConfig {
    std::vector<double> sigmas{1.0, 2.0, 4.0};
    std::vector<std::pair<int, int>> derivative_orders{{1, 0}, {0, 1}};  // dx + dy <= 1
    bool include_raw_intensity = true;

    int feature_dim() const {
        return 3 * ((include_raw_intensity ? 1 : 0) +
                    static_cast<int>(sigmas.size()) * static_cast<int>(derivative_orders.size()));
    }
};

void validate(const IscFeatureConfig& cfg);

uint64_t feature_config_fingerprint(const IscFeatureConfig& cfg);

// Row-major sample matrix, one row per FOV pixel.
struct FeatureMatrix {
    long long rows = 0;
    int cols = 0;
    std::vector<double> data;

    double at(long long r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    double* row(long long r) { return &data[static_cast<std::size_t>(r) * cols]; }
    const double* row(long long r) const { return &data[static_cast<std::size_t>(r) * cols]; }
};

// One row per FOV pixel in row-major pixel order. With standardize set, each
// column is shifted/scaled to zero mean and unit variance over the image;
// zero-variance columns become all zero.
FeatureMatrix extract_isc_features(const RasterImage& img, const FovMask& mask,
                                   const IscFeatureConfig& cfg, bool standardize = true);

struct ClusterModel {
    int k = 0;
    int feature_dim = 0;
    std::vector<double> centers;  // k x feature_dim, row-major
    uint64_t config_fingerprint = 0;

    const double* center(int c) const { return &centers[static_cast<std::size_t>(c) * feature_dim]; }
};

struct KmeansFitInfo {
    int iterations = 0;
    int repairs = 0;
    std::vector<double> inertia_history;  // one value per Lloyd iteration
};

// k-means++ seeding from the given seed, then Lloyd iterations until every
// center moves less than tol or max_iter is reached. Empty clusters are
// re-seeded to the point farthest from its assigned center (at most k repairs
// per iteration). Bit-identical per seed. Throws when fewer distinct rows
// than k exist.
ClusterModel kmeans_fit(const FeatureMatrix& samples, int k, uint64_t seed,
                        int max_iter = 300, double tol = 1e-6,
                        KmeansFitInfo* info = nullptr);

// Lloyd iterations from caller-provided centers (k x feature_dim, row-major);
// also the backend of kmeans_fit once seeding is done.
ClusterModel kmeans_fit_warm(const FeatureMatrix& samples, int k,
                             std::vector<double> initial_centers, int max_iter = 300,
                             double tol = 1e-6, KmeansFitInfo* info = nullptr);

// Nearest-center assignment (ties to the lowest index) for each row.
std::vector<int> kmeans_assign(const FeatureMatrix& samples, const ClusterModel& model);

struct IscHistogram {
    std::vector<double> counts;  // normalized, sums to 1
};

IscHistogram isc_histogram(const FeatureMatrix& samples, const ClusterModel& model);

struct SvmModel {
    std::vector<double> weights;
    double bias = 0.0;
    double calib_slope = 1.0;      // > 0
    double calib_intercept = 0.0;  // score = sigmoid(slope * margin + intercept)
};

// Linear SVM on hinge loss + L2 penalty (strength 1 / c_reg), trained by
// full-batch subgradient descent with backtracking step control; the objective
// never increases between accepted steps. Gradient and objective sums use
// midpoint-split pairwise reduction, so duplicating the whole training set
// reproduces identical weights. A sigmoid calibration is fitted on the
// training margins. Labels are 0/1; both classes must be present.
SvmModel svm_train(const std::vector<IscHistogram>& histograms,
                   const std::vector<int>& labels, double c_reg, int epochs,
                   uint64_t seed);

double svm_decision(const SvmModel& model, const IscHistogram& hist);

// Calibrated decision in (0, 1).
double svm_probability(const SvmModel& model, const IscHistogram& hist);

// Regularized hinge objective used by the trainer; exposed for verification.
double svm_objective(const std::vector<IscHistogram>& histograms,
                     const std::vector<int>& labels, double c_reg,
                     const SvmModel& model);

// features -> cluster histogram -> calibrated SVM output.
// Throws when the cluster model fingerprint does not match cfg.
double isc_score(const RasterImage& img, const FovMask& mask, const ClusterModel& cluster,
                 const SvmModel& svm, const IscFeatureConfig& cfg);

// At most max_rows rows drawn without replacement from the seeded generator.
FeatureMatrix sample_rows(const FeatureMatrix& samples, long long max_rows, uint64_t seed);

struct IscModel {
    IscFeatureConfig cfg;
    ClusterModel cluster;
    SvmModel svm;
};

struct IscTrainOptions {
    int k = 5;
    long long sample_per_image = 5000;  // clustering subsample; assignment uses all pixels
    double c_reg = 10.0;
    int epochs = 300;
    uint64_t seed = 0;
    double fov_threshold = 0.06;
};

// Full training pipeline over labeled images (1 = adequate, 0 = degraded).
IscModel train_isc_model(const std::vector<RasterImage>& images,
                         const std::vector<int>& labels, const IscFeatureConfig& cfg,
                         const IscTrainOptions& opts);

// Single-file model persistence ("ISCM1", little-endian 64-bit payload).
// The loader rejects files whose stored fingerprint does not match the
// fingerprint recomputed from the stored feature configuration.
void save_isc_model(const IscModel& model, const std::string& path);
IscModel load_isc_model(const std::string& path);

}  // namespace fundusqa
