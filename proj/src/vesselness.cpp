#include "fundusqa/vesselness.hpp"

#include <cmath>
#include <stdexcept>

#include "fundusqa/image_io.hpp"
#include "fundusqa/parallel.hpp"

namespace fundusqa {

void validate(const FrangiParams& p) {
    validate(p.scales);
    if (!(p.beta > 0.0)) throw std::invalid_argument("frangi: beta must be > 0");
    if (!(p.c > 0.0)) throw std::invalid_argument("frangi: c must be > 0");
}

VesselProbabilityMap frangi_vesselness(const GrayImage& green, const FrangiParams& params) {
    validate(params);
    if (green.width < 1 || green.height < 1) {
        throw std::invalid_argument("frangi: empty image");
    }

    GrayImage work = params.bright_ridges ? green : complement(green);
    for (double& v : work.data) v *= 100.0;

    VesselProbabilityMap map;
    map.width = green.width;
    map.height = green.height;
    map.data.assign(work.data.size(), 0.0);

    const double beta_den = 2.0 * params.beta * params.beta;
    const double c_den = 2.0 * params.c * params.c;

    for (const double sigma : params.scales.sigmas) {
        const HessianPlanes h = hessian_at_scale(work, sigma, params.scales.truncation_radius);
#pragma omp parallel for num_threads(worker_count()) schedule(static)
        for (long long p = 0; p < static_cast<long long>(map.data.size()); ++p) {
            const double ixx = h.ixx.data[p];
            const double ixy = h.ixy.data[p];
            const double iyy = h.iyy.data[p];
            const double tr = ixx + iyy;
            const double df = ixx - iyy;
            const double disc = std::sqrt(df * df + 4.0 * ixy * ixy);
            const double mu1 = 0.5 * (tr + disc);
            const double mu2 = 0.5 * (tr - disc);
            double l1, l2;  // |l1| <= |l2|
            if (std::fabs(mu1) >= std::fabs(mu2)) {
                l2 = mu1;
                l1 = mu2;
            } else {
                l2 = mu2;
                l1 = mu1;
            }
            if (!(l2 < 0.0)) continue;  // bright ridges need negative principal curvature
            const double rb = l1 / l2;
            const double s2 = l1 * l1 + l2 * l2;
            const double v = std::exp(-rb * rb / beta_den) * (1.0 - std::exp(-s2 / c_den));
            if (v > map.data[p]) map.data[p] = v;
        }
    }
    return map;
}

BinaryVesselTree binarize(const VesselProbabilityMap& map, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw std::invalid_argument("binarize: threshold must lie in [0,1]");
    }
    BinaryVesselTree tree;
    tree.width = map.width;
    tree.height = map.height;
    tree.data.resize(map.data.size());
    for (std::size_t p = 0; p < map.data.size(); ++p) {
        tree.data[p] = map.data[p] >= threshold ? 1 : 0;
    }
    return tree;
}

BinaryVesselTree segment_classical(const RasterImage& img, const FovMask& mask,
                                   const FrangiParams& params, double threshold) {
    if (mask.width != img.width || mask.height != img.height) {
        throw std::invalid_argument("segment_classical: mask dimensions mismatch");
    }
    GrayImage g = green_channel(img);
    if (params.bright_ridges) g = complement(g);
    FrangiParams bright = params;
    bright.bright_ridges = true;
    const VesselProbabilityMap map = frangi_vesselness(g, bright);
    BinaryVesselTree tree = binarize(map, threshold);

    const auto eroded = erode_mask(mask, kFovErosionRadius);
    if (!eroded) {
        std::fill(tree.data.begin(), tree.data.end(), 0);
        return tree;
    }
    for (std::size_t p = 0; p < tree.data.size(); ++p) {
        if (!eroded->data[p]) tree.data[p] = 0;
    }
    return tree;
}

void save_vessel_tree(const BinaryVesselTree& tree, const std::string& path) {
    save_mask_png(tree.data, tree.width, tree.height, path);
}

BinaryVesselTree load_vessel_tree(const std::string& path) {
    BinaryVesselTree tree;
    tree.data = load_mask_png(path, tree.width, tree.height);
    return tree;
}

}  // namespace fundusqa
