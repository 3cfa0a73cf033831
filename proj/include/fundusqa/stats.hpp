#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace fundusqa {

struct RocPoint {
    double threshold;  // predict positive when score >= threshold
    double tpr;
    double fpr;
};

// Operating points sorted by descending threshold, one per distinct score,
// with (+inf, 0, 0) and (-inf, 1, 1) sentinels at the ends.
struct RocCurve {
    std::vector<RocPoint> points;
    long long positives = 0;
    long long negatives = 0;
};

// Throws std::invalid_argument on length mismatch or single-class labels.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

// Trapezoidal area over (fpr, tpr).
double auc(const RocCurve& curve);

struct YoudenResult {
    double threshold;    // midpoint between the chosen score and the next lower one
    double j_statistic;  // tpr - fpr at the chosen operating point
    double tpr = 0.0;
    double fpr = 0.0;
};

// Maximizes J over the distinct-score operating points (sentinels excluded).
// Ties break toward higher tpr, then lower threshold. When no lower distinct
// score exists, the chosen score itself is reported.
YoudenResult youden_threshold(const RocCurve& curve);

struct PairedTestResult {
    double t_statistic = 0.0;
    long long degrees_of_freedom = 0;
    double p_two_tailed = 1.0;
    double mean_difference = 0.0;
};

// Two-tailed paired Student t-test on a - b. Throws std::invalid_argument on
// length mismatch, n < 2, or zero-variance differences.
PairedTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

struct KsResult {
    double d = 0.0;
    double p = 1.0;
};

// One-sample two-sided Kolmogorov-Smirnov statistic against a continuous CDF,
// with the asymptotic p-value at sqrt(n) * D.
KsResult ks_statistic(std::span<const double> samples,
                      const std::function<double(double)>& cdf);

struct StatsSummary {
    long long n = 0;
    double mean = 0.0;
    double std_dev = 0.0;  // sample standard deviation (n - 1)
    double ks_statistic = 0.0;
    double ks_p = 1.0;
    bool normal_at_005 = false;
    bool zero_variance = false;  // KS step skipped when set
};

// Mean, sample std, and a normality check: KS distance against a normal with
// the sample's fitted mean/std. Because the parameters are estimated from the
// sample, the p-value applies the Dallal-Wilkinson small-sample correction
// (the one statistics packages use for this test); the uncorrected asymptotic
// tail has essentially no power at these sample sizes.
StatsSummary summarize(std::span<const double> samples, double alpha);

// Corrected p-value for the KS distance against a fitted normal.
double lilliefors_corrected_p(double d, long long n);

// Continued-fraction regularized incomplete beta I_x(a, b), 1e-12 convergence.
double regularized_incomplete_beta(double a, double b, double x);

// Two-tailed Student-t tail probability at |t| with df degrees of freedom.
double student_t_two_tailed_p(double t, long long df);

// Asymptotic Kolmogorov tail Q(lambda) = 2 sum_k (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_asymptotic_p(double lambda);

double normal_cdf(double z);

}  // namespace fundusqa
