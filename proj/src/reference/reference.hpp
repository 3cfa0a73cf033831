#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fundusqa/quality_isc.hpp"
#include "fundusqa/raster.hpp"
#include "fundusqa/vesselness.hpp"

// Serial reference implementations. They deliberately avoid the production
// code paths (direct 2-D convolution instead of separable passes, explicit
// one-sided Jacobi SVD, brute-force pair counting, quadrature CDFs) so the
// tests can check the fast kernels against an independent route, and the
// benchmark can compare single-thread baselines against the OpenMP kernels.
namespace fundusqa::reference {

// Direct 2-D convolution with the outer-product Gaussian-derivative kernel,
// reflected borders. O(w * h * r^2); intended for small images.
GrayImage gaussian_derivative_direct(const GrayImage& img, double sigma, int dx, int dy,
                                     double truncation = 4.0);

// Straight serial re-derivation of the multiscale ridge filter.
VesselProbabilityMap frangi_vesselness_serial(const GrayImage& green,
                                              const FrangiParams& params);

// Serial gradient-coherence field; singular values of the stacked window
// gradients via the extended-precision normal equations (the production path
// orthogonalizes the columns instead).
std::vector<double> anisotropy_serial(const GrayImage& green, int window);

// Serial single-pass Gaussian blur (separable, no threading) for benchmarks.
GrayImage gaussian_blur_serial(const GrayImage& img, double sigma, double truncation = 4.0);

// Probability that a random positive outranks a random negative, ties at 1/2.
double auc_pair_count(std::span<const double> scores, std::span<const int> labels);

struct YoudenOracle {
    double threshold = 0.0;
    double j_statistic = 0.0;
};

// Exhaustive scan over every distinct-score operating point with the
// higher-tpr-then-lower-threshold tie break.
YoudenOracle youden_exhaustive(std::span<const double> scores, std::span<const int> labels);

// Two-tailed Student-t p-value by adaptive Simpson quadrature of the density.
double t_two_tailed_p_quadrature(double t, long long df);

// Within-cluster sum of squared distances under nearest-center assignment.
double kmeans_inertia_brute(const FeatureMatrix& samples, const ClusterModel& model);

// Serial nearest-center assignment for benchmarks.
std::vector<int> kmeans_assign_serial(const FeatureMatrix& samples, const ClusterModel& model);

}  // namespace fundusqa::reference
