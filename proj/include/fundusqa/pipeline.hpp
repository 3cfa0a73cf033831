#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fundusqa/quality_isc.hpp"
#include "fundusqa/quality_qv.hpp"
#include "fundusqa/stats.hpp"

namespace fundusqa {

struct ManifestEntry {
    std::string id;
    std::string retina_path;
    std::string vessel_path;
    std::string synthetic_path;  // optional
    std::optional<int> grade;    // 0..3 when present
    bool excluded = false;
};

// Line-delimited JSON on disk: a {"version": N} header line, then one entry
// object per line.
struct DatasetManifest {
    int version = 1;
    std::vector<ManifestEntry> entries;
};

struct BuildManifestResult {
    DatasetManifest manifest;
    std::vector<std::string> warnings;  // unmatched files, unknown grade ids
};

// Pairs retina and vessel files by shared basename stem; grades are joined by
// id from a "id,grade" CSV and entries with grade > 2 are marked excluded.
// Throws std::runtime_error when no stems match.
BuildManifestResult build_manifest(const std::string& retina_dir,
                                   const std::string& vessel_dir,
                                   const std::optional<std::string>& synthetic_dir = {},
                                   const std::optional<std::string>& grade_file = {});

void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Marks every listed id as excluded; returns ids that were not found.
std::vector<std::string> apply_exclusion_list(DatasetManifest& manifest,
                                              const std::string& id_file);

struct SplitSpec {
    long long train_count = 0;
    long long val_count = 0;
    long long test_count = 0;
    uint64_t seed = 0;
};

// Seeded shuffle of the non-excluded entries, then contiguous slices of the
// requested sizes. Throws when the counts do not sum to the non-excluded size.
std::array<DatasetManifest, 3> split_dataset(const DatasetManifest& manifest,
                                             const SplitSpec& spec);

enum class QualityMetric { qv, isc };

struct ScoreRow {
    std::string id;
    bool ok = false;
    std::string error;
    double score = 0.0;
    long long vessel_pixel_count = 0;
};

struct ScoreBatchOptions {
    QualityMetric metric = QualityMetric::qv;
    bool include_excluded = false;
    bool score_synthetic = false;  // score synthetic_path instead of retina_path
    int qv_window = 15;
    FrangiParams frangi{};
    std::string isc_model_path;  // required for the ISC metric
    double fov_threshold = kDefaultFovThreshold;
};

// One row per manifest entry honoring the exclusion flag; per-row failures
// are recorded without aborting the batch. Rows follow manifest order.
std::vector<ScoreRow> score_batch(const DatasetManifest& manifest,
                                  const ScoreBatchOptions& opts);

void write_score_csv(std::span<const ScoreRow> rows, const std::string& path,
                     bool with_vessel_count);

// id -> score pairs from a score CSV (rows without a finite score skipped).
std::vector<std::pair<std::string, double>> load_score_csv(const std::string& path,
                                                           const std::string& score_col = "score");

struct QualityTableRow {
    std::string label;
    std::string metric;
    long long n = 0;
    double mean = 0.0;
    double std_dev = 0.0;
    bool normal_at_005 = false;
    bool zero_variance = false;
};

struct QualityTablePairwise {
    std::string metric;
    bool valid = false;
    std::string note;  // set when the paired test could not run
    double t = 0.0;
    long long df = 0;
    double p_two_tailed = 1.0;
    bool significant = false;
    double mean_difference = 0.0;
};

struct QualityTable {
    double alpha = 0.05;
    std::vector<QualityTableRow> rows;
    QualityTablePairwise pairwise;
};

// Pairs the two score sets by id (sorted intersection), summarizes each side,
// and runs the paired t-test. A zero-variance difference is surfaced in the
// pairwise note while the summaries are still produced. Throws when the id
// sets do not intersect.
QualityTable compare_report(std::span<const std::pair<std::string, double>> real_scores,
                            std::span<const std::pair<std::string, double>> synthetic_scores,
                            double alpha, const std::string& metric_name);

std::string render_table_text(const QualityTable& table);
void write_table_csv(const QualityTable& table, const std::string& path);

}  // namespace fundusqa
