#include "fundusqa/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "fundusqa/csv.hpp"
#include "fundusqa/image_io.hpp"
#include "fundusqa/parallel.hpp"
#include "fundusqa/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fundusqa {

namespace {

std::map<std::string, std::string> stem_index(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        throw std::runtime_error(dir + ": not a directory");
    }
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        out[entry.path().stem().string()] = entry.path().string();
    }
    return out;
}

}  // namespace

BuildManifestResult build_manifest(const std::string& retina_dir,
                                   const std::string& vessel_dir,
                                   const std::optional<std::string>& synthetic_dir,
                                   const std::optional<std::string>& grade_file) {
    BuildManifestResult result;
    const auto retina = stem_index(retina_dir);
    const auto vessel = stem_index(vessel_dir);
    std::map<std::string, std::string> synthetic;
    if (synthetic_dir) synthetic = stem_index(*synthetic_dir);

    std::map<std::string, int> grades;
    if (grade_file) {
        const CsvTable table = read_csv(*grade_file);
        const int id_col = column_index(table, "id");
        const int grade_col = column_index(table, "grade");
        for (const auto& row : table.rows) {
            grades[row[id_col]] = static_cast<int>(parse_double(row[grade_col]));
        }
    }

    for (const auto& [stem, retina_path] : retina) {
        const auto v = vessel.find(stem);
        if (v == vessel.end()) {
            result.warnings.push_back("retina without vessel match: " + stem);
            continue;
        }
        ManifestEntry entry;
        entry.id = stem;
        entry.retina_path = retina_path;
        entry.vessel_path = v->second;
        if (const auto s = synthetic.find(stem); s != synthetic.end()) {
            entry.synthetic_path = s->second;
        }
        if (const auto g = grades.find(stem); g != grades.end()) {
            entry.grade = g->second;
            if (*entry.grade > 2) entry.excluded = true;
        }
        result.manifest.entries.push_back(std::move(entry));
    }
    for (const auto& [stem, path] : vessel) {
        if (!retina.contains(stem)) {
            result.warnings.push_back("vessel without retina match: " + stem);
        }
    }
    if (result.manifest.entries.empty()) {
        throw std::runtime_error("build_manifest: no matching retina/vessel stems");
    }
    return result;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << json{{"version", manifest.version}}.dump() << '\n';
    for (const auto& e : manifest.entries) {
        json j{{"id", e.id},
               {"retina_path", e.retina_path},
               {"vessel_path", e.vessel_path},
               {"excluded", e.excluded}};
        if (!e.synthetic_path.empty()) j["synthetic_path"] = e.synthetic_path;
        if (e.grade) j["grade"] = *e.grade;
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    DatasetManifest manifest;
    std::string line;
    bool saw_header = false;
    std::set<std::string> seen_ids;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error(path + ": bad manifest line: " + e.what());
        }
        if (!saw_header) {
            if (!j.contains("version")) throw std::runtime_error(path + ": missing version header");
            manifest.version = j["version"].get<int>();
            saw_header = true;
            continue;
        }
        ManifestEntry e;
        e.id = j.at("id").get<std::string>();
        e.retina_path = j.value("retina_path", "");
        e.vessel_path = j.value("vessel_path", "");
        e.synthetic_path = j.value("synthetic_path", "");
        if (j.contains("grade")) e.grade = j["grade"].get<int>();
        e.excluded = j.value("excluded", false);
        if (!seen_ids.insert(e.id).second) {
            throw std::runtime_error(path + ": duplicate manifest id " + e.id);
        }
        manifest.entries.push_back(std::move(e));
    }
    if (!saw_header) throw std::runtime_error(path + ": empty manifest");
    return manifest;
}

std::vector<std::string> apply_exclusion_list(DatasetManifest& manifest,
                                              const std::string& id_file) {
    std::ifstream in(id_file);
    if (!in) throw std::runtime_error(id_file + ": cannot open exclusion list");
    std::set<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.insert(line);
    }
    std::vector<std::string> missing;
    for (auto& e : manifest.entries) {
        if (ids.erase(e.id)) e.excluded = true;
    }
    missing.assign(ids.begin(), ids.end());
    return missing;
}

std::array<DatasetManifest, 3> split_dataset(const DatasetManifest& manifest,
                                             const SplitSpec& spec) {
    if (spec.train_count < 0 || spec.val_count < 0 || spec.test_count < 0) {
        throw std::invalid_argument("split_dataset: negative counts");
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        if (!manifest.entries[i].excluded) keep.push_back(i);
    }
    const long long total = spec.train_count + spec.val_count + spec.test_count;
    if (total != static_cast<long long>(keep.size())) {
        std::ostringstream msg;
        msg << "split_dataset: counts sum to " << total << " but " << keep.size()
            << " non-excluded entries exist";
        throw std::runtime_error(msg.str());
    }

    Rng rng(spec.seed);
    for (std::size_t i = 0; i + 1 < keep.size(); ++i) {
        const std::size_t j = i + static_cast<std::size_t>(
                                      rng.below(static_cast<uint64_t>(keep.size() - i)));
        std::swap(keep[i], keep[j]);
    }

    std::array<DatasetManifest, 3> out;
    const std::array<long long, 3> counts{spec.train_count, spec.val_count, spec.test_count};
    std::size_t cursor = 0;
    for (int part = 0; part < 3; ++part) {
        out[part].version = manifest.version;
        for (long long i = 0; i < counts[part]; ++i) {
            out[part].entries.push_back(manifest.entries[keep[cursor++]]);
        }
    }
    return out;
}

std::vector<ScoreRow> score_batch(const DatasetManifest& manifest,
                                  const ScoreBatchOptions& opts) {
    std::optional<IscModel> isc;
    if (opts.metric == QualityMetric::isc) {
        if (opts.isc_model_path.empty()) {
            throw std::runtime_error("score_batch: ISC metric requires a model file");
        }
        isc = load_isc_model(opts.isc_model_path);
    }

    std::vector<const ManifestEntry*> selected;
    for (const auto& e : manifest.entries) {
        if (e.excluded && !opts.include_excluded) continue;
        selected.push_back(&e);
    }

    std::vector<ScoreRow> rows(selected.size());
#pragma omp parallel for num_threads(worker_count()) schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(selected.size()); ++i) {
        const ManifestEntry& e = *selected[i];
        ScoreRow row;
        row.id = e.id;
        try {
            const std::string& path = opts.score_synthetic ? e.synthetic_path : e.retina_path;
            if (path.empty()) throw std::runtime_error("no image path for entry " + e.id);
            const RasterImage img = load_image(path);
            if (opts.metric == QualityMetric::qv) {
                const QvReport report = qv_score(img, opts.frangi, opts.qv_window);
                row.score = report.score;
                row.vessel_pixel_count = report.vessel_pixel_count;
            } else {
                FovMask mask = FovMask::full(img.width, img.height);
                try {
                    mask = detect_fov(img, opts.fov_threshold);
                } catch (const std::runtime_error&) {
                }
                row.score = isc_score(img, mask, isc->cluster, isc->svm, isc->cfg);
            }
            row.ok = true;
        } catch (const std::exception& ex) {
            row.ok = false;
            row.error = ex.what();
        }
        rows[i] = std::move(row);
    }
    return rows;
}

void write_score_csv(std::span<const ScoreRow> rows, const std::string& path,
                     bool with_vessel_count) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << (with_vessel_count ? "id,score,vessel_pixel_count,error\n" : "id,score,error\n");
    for (const auto& row : rows) {
        out << row.id << ',';
        if (row.ok) out << format_double(row.score);
        if (with_vessel_count) {
            out << ',';
            if (row.ok) out << row.vessel_pixel_count;
        }
        out << ',' << row.error << '\n';
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

std::vector<std::pair<std::string, double>> load_score_csv(const std::string& path,
                                                           const std::string& score_col) {
    const CsvTable table = read_csv(path);
    const int id_col = column_index(table, "id");
    const int val_col = column_index(table, score_col);
    std::vector<std::pair<std::string, double>> out;
    for (const auto& row : table.rows) {
        const std::string& cell = row[val_col];
        if (cell.empty()) continue;  // failed row
        out.emplace_back(row[id_col], parse_double(cell));
    }
    return out;
}

QualityTable compare_report(std::span<const std::pair<std::string, double>> real_scores,
                            std::span<const std::pair<std::string, double>> synthetic_scores,
                            double alpha, const std::string& metric_name) {
    std::map<std::string, double> real(real_scores.begin(), real_scores.end());
    std::map<std::string, double> synth(synthetic_scores.begin(), synthetic_scores.end());
    std::vector<double> a, b;
    for (const auto& [id, score] : real) {
        const auto it = synth.find(id);
        if (it == synth.end()) continue;
        a.push_back(score);
        b.push_back(it->second);
    }
    if (a.empty()) throw std::runtime_error("compare_report: score id sets do not intersect");

    QualityTable table;
    table.alpha = alpha;
    auto push_row = [&](const std::string& label, std::span<const double> values) {
        const StatsSummary s = summarize(values, alpha);
        table.rows.push_back({label, metric_name, s.n, s.mean, s.std_dev, s.normal_at_005,
                              s.zero_variance});
    };
    push_row("real", a);
    push_row("synthetic", b);

    table.pairwise.metric = metric_name;
    try {
        const PairedTestResult t = paired_t_test(a, b);
        table.pairwise.valid = true;
        table.pairwise.t = t.t_statistic;
        table.pairwise.df = t.degrees_of_freedom;
        table.pairwise.p_two_tailed = t.p_two_tailed;
        table.pairwise.significant = t.p_two_tailed < alpha;
        table.pairwise.mean_difference = t.mean_difference;
    } catch (const std::invalid_argument& e) {
        table.pairwise.valid = false;
        table.pairwise.note = e.what();
    }
    return table;
}

std::string render_table_text(const QualityTable& table) {
    std::ostringstream out;
    out << "set          metric    n      mean          std           normal@" << table.alpha
        << "\n";
    for (const auto& row : table.rows) {
        std::ostringstream mean, sd;
        mean << row.mean;
        sd << row.std_dev;
        out << row.label;
        for (std::size_t i = row.label.size(); i < 13; ++i) out << ' ';
        out << row.metric;
        for (std::size_t i = row.metric.size(); i < 10; ++i) out << ' ';
        std::string n = std::to_string(row.n);
        out << n;
        for (std::size_t i = n.size(); i < 7; ++i) out << ' ';
        out << mean.str();
        for (std::size_t i = mean.str().size(); i < 14; ++i) out << ' ';
        out << sd.str();
        for (std::size_t i = sd.str().size(); i < 14; ++i) out << ' ';
        out << (row.zero_variance ? "n/a (zero variance)" : (row.normal_at_005 ? "yes" : "no"))
            << '\n';
    }
    if (table.pairwise.valid) {
        out << "paired t-test (" << table.pairwise.metric << "): t=" << table.pairwise.t
            << ", df=" << table.pairwise.df << ", p=" << table.pairwise.p_two_tailed
            << ", significant@" << table.alpha << ": "
            << (table.pairwise.significant ? "yes" : "no") << '\n';
    } else {
        out << "paired t-test (" << table.pairwise.metric << "): " << table.pairwise.note << '\n';
    }
    return out.str();
}

void write_table_csv(const QualityTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "set,metric,n,mean,std,normal_at_alpha\n";
    for (const auto& row : table.rows) {
        out << row.label << ',' << row.metric << ',' << row.n << ',' << format_double(row.mean)
            << ',' << format_double(row.std_dev) << ','
            << (row.zero_variance ? "zero_variance" : (row.normal_at_005 ? "1" : "0")) << '\n';
    }
    out << "pairwise_metric,t,df,p_two_tailed,significant,mean_difference,note\n";
    if (table.pairwise.valid) {
        out << table.pairwise.metric << ',' << format_double(table.pairwise.t) << ','
            << table.pairwise.df << ',' << format_double(table.pairwise.p_two_tailed) << ','
            << (table.pairwise.significant ? 1 : 0) << ','
            << format_double(table.pairwise.mean_difference) << ",\n";
    } else {
        out << table.pairwise.metric << ",,,,,," << table.pairwise.note << '\n';
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace fundusqa
