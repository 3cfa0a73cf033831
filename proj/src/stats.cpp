#include "fundusqa/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fundusqa {

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("roc_curve: scores and labels differ in length");
    }
    long long pos = 0, neg = 0;
    for (int l : labels) (l ? pos : neg)++;
    if (pos == 0 || neg == 0) {
        throw std::invalid_argument("roc_curve: both classes must be present");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    RocCurve curve;
    curve.positives = pos;
    curve.negatives = neg;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    long long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (labels[order[i]] ? tp : fp)++;
            ++i;
        }
        curve.points.push_back({s, static_cast<double>(tp) / pos, static_cast<double>(fp) / neg});
    }
    curve.points.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});
    return curve;
}

double auc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        area += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
    }
    return area;
}

YoudenResult youden_threshold(const RocCurve& curve) {
    if (curve.points.size() < 3) throw std::invalid_argument("youden_threshold: degenerate curve");
    YoudenResult best;
    bool have = false;
    // Skip the two sentinels; real operating points carry the distinct scores.
    for (std::size_t i = 1; i + 1 < curve.points.size(); ++i) {
        const auto& pt = curve.points[i];
        const double j = pt.tpr - pt.fpr;
        const double next_lower = curve.points[i + 1].threshold;
        const double reported = std::isinf(next_lower)
                                    ? pt.threshold
                                    : 0.5 * (pt.threshold + next_lower);
        const bool better =
            !have || j > best.j_statistic ||
            (j == best.j_statistic &&
             (pt.tpr > best.tpr || (pt.tpr == best.tpr && reported < best.threshold)));
        if (better) {
            best = {reported, j, pt.tpr, pt.fpr};
            have = true;
        }
    }
    return best;
}

PairedTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw std::invalid_argument("paired_t_test: need n >= 2");
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (a[i] - b[i]) - mean;
        ss += d * d;
    }
    if (ss == 0.0) throw std::invalid_argument("paired_t_test: zero-variance differences");
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    PairedTestResult r;
    r.mean_difference = mean;
    r.degrees_of_freedom = static_cast<long long>(n) - 1;
    r.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
    r.p_two_tailed = student_t_two_tailed_p(r.t_statistic, r.degrees_of_freedom);
    return r;
}

KsResult ks_statistic(std::span<const double> samples,
                      const std::function<double(double)>& cdf) {
    if (samples.empty()) throw std::invalid_argument("ks_statistic: empty sample");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = cdf(sorted[i]);
        const double hi = (static_cast<double>(i) + 1.0) / n - f;
        const double lo = f - static_cast<double>(i) / n;
        d = std::max(d, std::max(hi, lo));
    }
    KsResult r;
    r.d = d;
    r.p = kolmogorov_asymptotic_p(std::sqrt(n) * d);
    return r;
}

StatsSummary summarize(std::span<const double> samples, double alpha) {
    if (samples.size() < 2) throw std::invalid_argument("summarize: need n >= 2");
    StatsSummary s;
    s.n = static_cast<long long>(samples.size());
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(samples.size());
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    s.mean = mean;
    s.std_dev = std::sqrt(ss / static_cast<double>(samples.size() - 1));
    if (s.std_dev == 0.0) {
        s.zero_variance = true;
        s.normal_at_005 = false;
        return s;
    }
    const double mu = s.mean;
    const double sigma = s.std_dev;
    const auto ks = ks_statistic(samples, [mu, sigma](double x) {
        return normal_cdf((x - mu) / sigma);
    });
    s.ks_statistic = ks.d;
    s.ks_p = lilliefors_corrected_p(ks.d, s.n);
    s.normal_at_005 = s.ks_p > alpha;
    return s;
}

double lilliefors_corrected_p(double d, long long n) {
    if (n < 4) throw std::invalid_argument("lilliefors_corrected_p: need n >= 4");
    double du = d;
    double nu = static_cast<double>(n);
    if (n > 100) {
        du = d * std::pow(nu / 100.0, 0.49);
        nu = 100.0;
    }
    const double e = -7.01256 * du * du * (nu + 2.78019) +
                     2.99587 * du * std::sqrt(nu + 2.78019) - 0.122119 +
                     0.974598 / std::sqrt(nu) + 1.67997 / nu;
    return std::clamp(std::exp(e), 0.0, 1.0);
}

namespace {

// Lentz continued fraction for the incomplete beta.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-12;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_tailed_p(double t, long long df) {
    if (df < 1) throw std::invalid_argument("student_t_two_tailed_p: df must be >= 1");
    if (t == 0.0) return 1.0;
    const double v = static_cast<double>(df);
    const double x = v / (v + t * t);
    return regularized_incomplete_beta(v / 2.0, 0.5, x);
}

double kolmogorov_asymptotic_p(double lambda) {
    if (lambda <= 0.0) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        if (term < 1e-14) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace fundusqa
