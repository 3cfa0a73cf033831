#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fundusqa/raster.hpp"
#include "fundusqa/vesselness.hpp"

namespace fundusqa {

// A conditioning vessel tree with its retinal image; dimensions must agree.
struct ImagePair {
    BinaryVesselTree vessel_tree;
    RasterImage retina;
};

ImagePair make_image_pair(BinaryVesselTree tree, RasterImage retina);

// Origins of an evenly spaced overlapping patch grid covering both image
// extremes on each axis.
struct PatchGrid {
    int patch_size = 0;
    int grid_rows = 0;
    int grid_cols = 0;
    std::vector<std::pair<int, int>> origins;  // (x, y), row-major
};

// origin_i = round(i * (image_size - patch_size) / (grid_dim - 1)); a single
// origin 0 when grid_dim == 1. Throws when the patch exceeds the image.
PatchGrid patch_grid(int image_size, int patch_size, int grid_dim);

// Per-patch discriminator probabilities.
struct DiscriminatorField {
    int rows = 0;
    int cols = 0;
    std::vector<double> probabilities;
};

DiscriminatorField constant_field(int rows, int cols, double p);

// CSV layout: first line "rows,cols", then row-major probabilities.
DiscriminatorField load_field_csv(const std::string& path);

struct LossConfig {
    double lambda = 100.0;
    double epsilon_clamp = 1e-7;  // probabilities clamped to [eps, 1-eps] before log
};

// mean log D(real) + mean log(1 - D(fake)), natural logarithm.
double adversarial_loss(const DiscriminatorField& d_real, const DiscriminatorField& d_fake,
                        const LossConfig& cfg);

// Mean absolute difference over all pixels and channels (mean rather than sum
// so the lambda weight is resolution-independent).
double l1_term(const RasterImage& r, const RasterImage& g);

double combined_loss(double adv, double l1, const LossConfig& cfg);

struct TripleEntry {
    std::string id;
    std::string retina_path;
    std::string synthetic_path;
    std::string vessel_path;  // optional, not needed by the loss itself
};

struct TripleScore {
    std::string id;
    bool ok = false;
    std::string error;
    double l1 = 0.0;
    double adv = 0.0;
    double combined = 0.0;
};

struct TripleBatchResult {
    std::vector<TripleScore> per_pair;
    double mean_l1 = 0.0;
    double mean_adv = 0.0;
    double mean_combined = 0.0;
    int failures = 0;
};

// Supplies (d_real, d_fake) for an entry; nullopt falls back to the
// constant-0.5 baseline field.
using FieldSupplier =
    std::function<std::optional<std::pair<DiscriminatorField, DiscriminatorField>>(
        const TripleEntry&)>;

// Scores every entry; per-entry failures are recorded without aborting the
// batch. Aggregates are means over the successful entries.
TripleBatchResult score_triples(std::span<const TripleEntry> entries, const LossConfig& cfg,
                                const FieldSupplier& fields = nullptr);

}  // namespace fundusqa
