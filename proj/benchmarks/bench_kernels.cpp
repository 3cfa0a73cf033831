// Compares the OpenMP kernels against the serial reference implementations
// on representative workloads and reports timings plus the largest value
// difference between the two routes.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "fundusqa/parallel.hpp"
#include "fundusqa/quality_isc.hpp"
#include "fundusqa/quality_qv.hpp"
#include "fundusqa/rng.hpp"
#include "fundusqa/vesselness.hpp"
#include "reference/reference.hpp"
#include "support/fixtures.hpp"

using namespace fundusqa;
using Clock = std::chrono::steady_clock;

namespace {

template <class F>
double time_ms(F&& fn, int reps) {
    fn();  // warm up
    const auto start = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count() / reps;
}

void report(const std::string& name, double serial_ms, double omp_ms, double max_diff) {
    std::printf("%-34s %10.2f %10.2f %8.2fx %12.3g\n", name.c_str(), serial_ms, omp_ms,
                serial_ms / omp_ms, max_diff);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace

int main() {
    const int size = 512;
    const auto fixture = testsupport::make_fundus_fixture(1, size);
    const GrayImage green = complement(green_channel(fixture.image));

    std::printf("threads: %d\n", worker_count());
    std::printf("%-34s %10s %10s %9s %12s\n", "kernel", "serial_ms", "omp_ms", "speedup",
                "max_diff");

    {
        GrayImage fast, slow;
        const double t_omp = time_ms([&] { fast = gaussian_derivative(green, 2.0, 0, 0); }, 5);
        const double t_ser =
            time_ms([&] { slow = reference::gaussian_blur_serial(green, 2.0); }, 3);
        report("gaussian blur sigma=2 512^2", t_ser, t_omp, max_abs_diff(fast.data, slow.data));
    }
    {
        FrangiParams params;
        VesselProbabilityMap fast, slow;
        const double t_omp = time_ms([&] { fast = frangi_vesselness(green, params); }, 3);
        const double t_ser =
            time_ms([&] { slow = reference::frangi_vesselness_serial(green, params); }, 1);
        report("multiscale vesselness 512^2", t_ser, t_omp, max_abs_diff(fast.data, slow.data));
    }
    {
        AnisotropyField fast;
        std::vector<double> slow;
        const double t_omp = time_ms([&] { fast = local_svd_anisotropy(green, 15); }, 3);
        const double t_ser = time_ms([&] { slow = reference::anisotropy_serial(green, 15); }, 1);
        report("svd anisotropy w=15 512^2", t_ser, t_omp, max_abs_diff(fast.data, slow));
    }
    {
        Rng rng(7);
        FeatureMatrix samples;
        samples.rows = 200000;
        samples.cols = 21;
        samples.data.resize(static_cast<std::size_t>(samples.rows) * samples.cols);
        for (double& v : samples.data) v = rng.normal();
        const ClusterModel model = kmeans_fit(sample_rows(samples, 5000, 1), 5, 3);
        std::vector<int> fast, slow;
        const double t_omp = time_ms([&] { fast = kmeans_assign(samples, model); }, 3);
        const double t_ser =
            time_ms([&] { slow = reference::kmeans_assign_serial(samples, model); }, 1);
        long long diff = 0;
        for (std::size_t i = 0; i < fast.size(); ++i) diff += fast[i] != slow[i];
        report("kmeans assign 200k x 21, k=5", t_ser, t_omp, static_cast<double>(diff));
    }
    return 0;
}
