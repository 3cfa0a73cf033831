#include "fundusqa/adversarial.hpp"

#include <cmath>
#include <stdexcept>

#include "fundusqa/csv.hpp"
#include "fundusqa/image_io.hpp"
#include "fundusqa/numeric.hpp"

namespace fundusqa {

ImagePair make_image_pair(BinaryVesselTree tree, RasterImage retina) {
    if (tree.width != retina.width || tree.height != retina.height) {
        throw std::invalid_argument("image pair: vessel tree and retina dimensions differ");
    }
    return ImagePair{std::move(tree), std::move(retina)};
}

PatchGrid patch_grid(int image_size, int patch_size, int grid_dim) {
    if (patch_size < 1 || patch_size > image_size) {
        throw std::invalid_argument("patch_grid: patch larger than image");
    }
    if (grid_dim < 1) throw std::invalid_argument("patch_grid: grid_dim must be >= 1");

    std::vector<int> axis(static_cast<std::size_t>(grid_dim), 0);
    const int span = image_size - patch_size;
    if (grid_dim == 1) {
        axis[0] = 0;
    } else {
        for (int i = 0; i < grid_dim; ++i) {
            axis[i] = static_cast<int>(std::lround(
                static_cast<double>(i) * span / (grid_dim - 1)));
        }
    }

    PatchGrid grid;
    grid.patch_size = patch_size;
    grid.grid_rows = grid_dim;
    grid.grid_cols = grid_dim;
    grid.origins.reserve(static_cast<std::size_t>(grid_dim) * grid_dim);
    for (int row = 0; row < grid_dim; ++row) {
        for (int col = 0; col < grid_dim; ++col) {
            grid.origins.emplace_back(axis[col], axis[row]);
        }
    }
    return grid;
}

DiscriminatorField constant_field(int rows, int cols, double p) {
    DiscriminatorField f;
    f.rows = rows;
    f.cols = cols;
    f.probabilities.assign(static_cast<std::size_t>(rows) * cols, p);
    return f;
}

DiscriminatorField load_field_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    if (table.header.size() != 2) {
        throw std::runtime_error(path + ": expected 'rows,cols' first line");
    }
    DiscriminatorField f;
    f.rows = static_cast<int>(parse_double(table.header[0]));
    f.cols = static_cast<int>(parse_double(table.header[1]));
    if (f.rows < 1 || f.cols < 1) throw std::runtime_error(path + ": bad field shape");
    f.probabilities.reserve(static_cast<std::size_t>(f.rows) * f.cols);
    for (const auto& row : table.rows) {
        for (const auto& cell : row) f.probabilities.push_back(parse_double(cell));
    }
    if (f.probabilities.size() != static_cast<std::size_t>(f.rows) * f.cols) {
        throw std::runtime_error(path + ": field value count mismatch");
    }
    return f;
}

namespace {

double clamped(double p, double eps) {
    if (p < eps) return eps;
    if (p > 1.0 - eps) return 1.0 - eps;
    return p;
}

}  // namespace

double adversarial_loss(const DiscriminatorField& d_real, const DiscriminatorField& d_fake,
                        const LossConfig& cfg) {
    if (d_real.rows != d_fake.rows || d_real.cols != d_fake.cols) {
        throw std::invalid_argument("adversarial_loss: field shapes differ");
    }
    if (!(cfg.epsilon_clamp > 0.0 && cfg.epsilon_clamp < 0.5)) {
        throw std::invalid_argument("adversarial_loss: epsilon_clamp must lie in (0, 0.5)");
    }
    const std::size_t n = d_real.probabilities.size();
    const double eps = cfg.epsilon_clamp;
    const double real_mean = pairwise_reduce(0, n, [&](std::size_t i) {
        return std::log(clamped(d_real.probabilities[i], eps));
    }) / static_cast<double>(n);
    const double fake_mean = pairwise_reduce(0, n, [&](std::size_t i) {
        return std::log(1.0 - clamped(d_fake.probabilities[i], eps));
    }) / static_cast<double>(n);
    return real_mean + fake_mean;
}

double l1_term(const RasterImage& r, const RasterImage& g) {
    if (r.width != g.width || r.height != g.height) {
        throw std::invalid_argument("l1_term: image shapes differ");
    }
    const std::size_t n = r.data.size();
    const double sum = pairwise_reduce(0, n, [&](std::size_t i) {
        return std::fabs(static_cast<double>(r.data[i]) - static_cast<double>(g.data[i]));
    });
    return sum / static_cast<double>(n);
}

double combined_loss(double adv, double l1, const LossConfig& cfg) {
    if (!(l1 >= 0.0)) throw std::invalid_argument("combined_loss: l1 must be >= 0");
    if (!(cfg.lambda >= 0.0)) throw std::invalid_argument("combined_loss: lambda must be >= 0");
    return adv + cfg.lambda * l1;
}

TripleBatchResult score_triples(std::span<const TripleEntry> entries, const LossConfig& cfg,
                                const FieldSupplier& fields) {
    TripleBatchResult result;
    result.per_pair.reserve(entries.size());
    for (const TripleEntry& entry : entries) {
        TripleScore score;
        score.id = entry.id;
        try {
            const RasterImage r = load_image(entry.retina_path);
            const RasterImage g = load_image(entry.synthetic_path);
            score.l1 = l1_term(r, g);
            std::optional<std::pair<DiscriminatorField, DiscriminatorField>> pair;
            if (fields) pair = fields(entry);
            if (!pair) {
                pair = std::make_pair(constant_field(1, 1, 0.5), constant_field(1, 1, 0.5));
            }
            score.adv = adversarial_loss(pair->first, pair->second, cfg);
            score.combined = combined_loss(score.adv, score.l1, cfg);
            score.ok = true;
        } catch (const std::exception& e) {
            score.ok = false;
            score.error = e.what();
            ++result.failures;
        }
        result.per_pair.push_back(std::move(score));
    }

    std::vector<double> l1s, advs, combos;
    for (const auto& s : result.per_pair) {
        if (!s.ok) continue;
        l1s.push_back(s.l1);
        advs.push_back(s.adv);
        combos.push_back(s.combined);
    }
    if (!l1s.empty()) {
        const double n = static_cast<double>(l1s.size());
        result.mean_l1 = pairwise_sum(l1s) / n;
        result.mean_adv = pairwise_sum(advs) / n;
        result.mean_combined = pairwise_sum(combos) / n;
    }
    return result;
}

}  // namespace fundusqa
