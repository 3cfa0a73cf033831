#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fundusqa/adversarial.hpp"
#include "fundusqa/csv.hpp"
#include "fundusqa/image_io.hpp"
#include "fundusqa/pipeline.hpp"
#include "fundusqa/quality_isc.hpp"
#include "fundusqa/quality_qv.hpp"
#include "fundusqa/stats.hpp"
#include "fundusqa/vesselness.hpp"

namespace fs = std::filesystem;
using namespace fundusqa;

namespace {

std::vector<std::string> list_images(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error(dir + ": not a directory");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".png" || ext == ".ppm") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error(dir + ": no PNG/PPM files");
    return files;
}

DatasetManifest manifest_from_dir(const std::string& dir) {
    DatasetManifest manifest;
    for (const auto& path : list_images(dir)) {
        ManifestEntry e;
        e.id = fs::path(path).stem().string();
        e.retina_path = path;
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

struct QualityArgs {
    std::string in_dir;
    std::string manifest_path;
    std::string out_csv;
    std::string which = "retina";
    bool include_excluded = false;
    int window = 15;
    std::string model_path;
};

int run_quality(const QualityArgs& args, QualityMetric metric) {
    if (args.in_dir.empty() == args.manifest_path.empty()) {
        throw CLI::ValidationError("quality", "exactly one of --in or --manifest is required");
    }
    DatasetManifest manifest = args.in_dir.empty() ? load_manifest(args.manifest_path)
                                                   : manifest_from_dir(args.in_dir);
    ScoreBatchOptions opts;
    opts.metric = metric;
    opts.include_excluded = args.include_excluded;
    opts.score_synthetic = args.which == "synthetic";
    opts.qv_window = args.window;
    opts.isc_model_path = args.model_path;
    const auto rows = score_batch(manifest, opts);
    write_score_csv(rows, args.out_csv, metric == QualityMetric::qv);
    int failures = 0;
    for (const auto& row : rows) {
        if (!row.ok) {
            ++failures;
            std::cerr << "warning: " << row.id << ": " << row.error << "\n";
        }
    }
    std::cout << "wrote " << rows.size() << " rows (" << failures << " failed) to "
              << args.out_csv << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retinal image quality metrics, segmentation statistics, and dataset tooling"};
    app.require_subcommand(1);

    // manifest
    auto* manifest_cmd = app.add_subcommand("manifest", "Pair retina/vessel files into a dataset manifest");
    std::string retina_dir, vessel_dir, synthetic_dir, grade_file, exclude_list, manifest_out;
    manifest_cmd->add_option("--retina-dir", retina_dir, "Directory of retina images")->required();
    manifest_cmd->add_option("--vessel-dir", vessel_dir, "Directory of vessel-tree images")->required();
    manifest_cmd->add_option("--synthetic-dir", synthetic_dir, "Directory of synthesized images");
    manifest_cmd->add_option("--grades", grade_file, "CSV with id,grade columns; grade > 2 excludes the entry");
    manifest_cmd->add_option("--exclude-list", exclude_list, "File of ids to mark excluded, one per line");
    manifest_cmd->add_option("--out", manifest_out, "Output manifest path (LDJSON)")->required();

    // split
    auto* split_cmd = app.add_subcommand("split", "Shuffle and slice a manifest into train/val/test");
    std::string split_manifest, split_counts, split_prefix;
    uint64_t split_seed = 0;
    split_cmd->add_option("--manifest", split_manifest, "Input manifest")->required();
    split_cmd->add_option("--counts", split_counts, "train,val,test sizes (must sum to the non-excluded count)")->required();
    split_cmd->add_option("--seed", split_seed, "Shuffle seed");
    split_cmd->add_option("--out-prefix", split_prefix, "Output prefix; writes <prefix>_train/_val/_test.jsonl")->required();

    // segment
    auto* segment_cmd = app.add_subcommand("segment", "Classical vessel segmentation to 1-bit PNG trees");
    std::string seg_in, seg_manifest, seg_out_dir;
    double seg_threshold = 0.1;
    double seg_fov = kDefaultFovThreshold;
    segment_cmd->add_option("--in", seg_in, "Directory of fundus images");
    segment_cmd->add_option("--manifest", seg_manifest, "Manifest whose retina images are segmented");
    segment_cmd->add_option("--out-dir", seg_out_dir, "Output directory")->required();
    segment_cmd->add_option("--threshold", seg_threshold, "Vesselness binarization threshold");
    segment_cmd->add_option("--fov-threshold", seg_fov, "FOV luminance threshold");

    // quality qv / quality isc
    auto* quality_cmd = app.add_subcommand("quality", "No-reference quality scores");
    quality_cmd->require_subcommand(1);
    QualityArgs qv_args, isc_args;
    auto* qv_cmd = quality_cmd->add_subcommand("qv", "Vesselness-weighted anisotropy score");
    qv_cmd->add_option("--in", qv_args.in_dir, "Directory of images to score");
    qv_cmd->add_option("--manifest", qv_args.manifest_path, "Manifest to score");
    qv_cmd->add_option("--out", qv_args.out_csv, "Output CSV")->required();
    qv_cmd->add_option("--which", qv_args.which, "retina|synthetic manifest path to score")
        ->check(CLI::IsMember({"retina", "synthetic"}));
    qv_cmd->add_option("--window", qv_args.window, "Anisotropy window (odd)");
    qv_cmd->add_flag("--include-excluded", qv_args.include_excluded, "Also score excluded entries");
    auto* isc_cmd = quality_cmd->add_subcommand("isc", "Cluster-histogram SVM score");
    isc_cmd->add_option("--in", isc_args.in_dir, "Directory of images to score");
    isc_cmd->add_option("--manifest", isc_args.manifest_path, "Manifest to score");
    isc_cmd->add_option("--model", isc_args.model_path, "ISCM1 model file")->required();
    isc_cmd->add_option("--out", isc_args.out_csv, "Output CSV")->required();
    isc_cmd->add_option("--which", isc_args.which, "retina|synthetic manifest path to score")
        ->check(CLI::IsMember({"retina", "synthetic"}));
    isc_cmd->add_flag("--include-excluded", isc_args.include_excluded, "Also score excluded entries");

    // isc-train
    auto* train_cmd = app.add_subcommand("isc-train", "Train the cluster + SVM quality model");
    std::string good_dir, bad_dir, model_out;
    IscTrainOptions train_opts;
    train_cmd->add_option("--good-dir", good_dir, "Directory of adequate-quality images")->required();
    train_cmd->add_option("--bad-dir", bad_dir, "Directory of degraded images")->required();
    train_cmd->add_option("--out", model_out, "Output model path")->required();
    train_cmd->add_option("--seed", train_opts.seed, "Training seed");
    train_cmd->add_option("--k", train_opts.k, "Cluster count");
    train_cmd->add_option("--sample-per-image", train_opts.sample_per_image, "Clustering subsample per image");
    train_cmd->add_option("--epochs", train_opts.epochs, "SVM epochs");
    train_cmd->add_option("--c-reg", train_opts.c_reg, "SVM regularization trade-off");

    // roc
    auto* roc_cmd = app.add_subcommand("roc", "AUC and optimal threshold from a score CSV");
    std::string roc_csv, roc_score_col = "score", roc_label_col = "label";
    roc_cmd->add_option("--scores", roc_csv, "CSV with score and label columns")->required();
    roc_cmd->add_option("--score-col", roc_score_col, "Score column name");
    roc_cmd->add_option("--labels-col", roc_label_col, "Label column name (0/1)");

    // loss
    auto* loss_cmd = app.add_subcommand("loss", "Patch-discriminator and L1 losses over (real, synthetic) pairs");
    std::string loss_manifest, loss_d_real, loss_d_fake, loss_out;
    LossConfig loss_cfg;
    loss_cmd->add_option("--manifest", loss_manifest, "Manifest with retina and synthetic paths")->required();
    loss_cmd->add_option("--lambda", loss_cfg.lambda, "L1 weight");
    loss_cmd->add_option("--d-real", loss_d_real, "Discriminator field CSV for real pairs");
    loss_cmd->add_option("--d-fake", loss_d_fake, "Discriminator field CSV for synthetic pairs");
    loss_cmd->add_option("--out", loss_out, "Per-pair CSV output");

    // report
    auto* report_cmd = app.add_subcommand("report", "Mean/std summaries and paired t-test for two score CSVs");
    std::string report_real, report_synth, report_out, report_metric = "score";
    double report_alpha = 0.05;
    report_cmd->add_option("--real", report_real, "CSV of real-image scores")->required();
    report_cmd->add_option("--synthetic", report_synth, "CSV of synthetic-image scores")->required();
    report_cmd->add_option("--alpha", report_alpha, "Significance level");
    report_cmd->add_option("--metric", report_metric, "Metric label for the table");
    report_cmd->add_option("--out-csv", report_out, "Also write the table as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 1;
    }

    try {
        if (manifest_cmd->parsed()) {
            auto result = build_manifest(
                retina_dir, vessel_dir,
                synthetic_dir.empty() ? std::nullopt : std::optional(synthetic_dir),
                grade_file.empty() ? std::nullopt : std::optional(grade_file));
            for (const auto& warning : result.warnings) {
                std::cerr << "warning: " << warning << "\n";
            }
            if (!exclude_list.empty()) {
                const auto missing = apply_exclusion_list(result.manifest, exclude_list);
                for (const auto& id : missing) {
                    std::cerr << "warning: exclusion id not in manifest: " << id << "\n";
                }
            }
            save_manifest(result.manifest, manifest_out);
            long long excluded = 0;
            for (const auto& e : result.manifest.entries) excluded += e.excluded ? 1 : 0;
            std::cout << "wrote " << result.manifest.entries.size() << " entries (" << excluded
                      << " excluded) to " << manifest_out << "\n";
        } else if (split_cmd->parsed()) {
            SplitSpec spec;
            spec.seed = split_seed;
            if (std::sscanf(split_counts.c_str(), "%lld,%lld,%lld", &spec.train_count,
                            &spec.val_count, &spec.test_count) != 3) {
                throw CLI::ValidationError("--counts", "expected train,val,test integers");
            }
            const auto manifest = load_manifest(split_manifest);
            const auto parts = split_dataset(manifest, spec);
            const std::array<std::string, 3> names{"train", "val", "test"};
            for (int i = 0; i < 3; ++i) {
                const std::string path = split_prefix + "_" + names[i] + ".jsonl";
                save_manifest(parts[i], path);
                std::cout << names[i] << ": " << parts[i].entries.size() << " -> " << path << "\n";
            }
        } else if (segment_cmd->parsed()) {
            if (seg_in.empty() == seg_manifest.empty()) {
                throw CLI::ValidationError("segment", "exactly one of --in or --manifest is required");
            }
            const DatasetManifest manifest =
                seg_in.empty() ? load_manifest(seg_manifest) : manifest_from_dir(seg_in);
            fs::create_directories(seg_out_dir);
            FrangiParams params;
            int failures = 0;
            for (const auto& e : manifest.entries) {
                try {
                    const RasterImage img = load_image(e.retina_path);
                    const FovMask mask = detect_fov(img, seg_fov);
                    const BinaryVesselTree tree = segment_classical(img, mask, params, seg_threshold);
                    save_vessel_tree(tree, (fs::path(seg_out_dir) / (e.id + ".png")).string());
                } catch (const std::exception& ex) {
                    ++failures;
                    std::cerr << "warning: " << e.id << ": " << ex.what() << "\n";
                }
            }
            std::cout << "segmented " << (manifest.entries.size() - failures) << "/"
                      << manifest.entries.size() << " images into " << seg_out_dir << "\n";
            if (failures == static_cast<int>(manifest.entries.size())) {
                throw std::runtime_error("segment: every entry failed");
            }
        } else if (qv_cmd->parsed()) {
            return run_quality(qv_args, QualityMetric::qv);
        } else if (isc_cmd->parsed()) {
            return run_quality(isc_args, QualityMetric::isc);
        } else if (train_cmd->parsed()) {
            std::vector<RasterImage> images;
            std::vector<int> labels;
            for (const auto& path : list_images(good_dir)) {
                images.push_back(load_image(path));
                labels.push_back(1);
            }
            for (const auto& path : list_images(bad_dir)) {
                images.push_back(load_image(path));
                labels.push_back(0);
            }
            const IscModel model = train_isc_model(images, labels, IscFeatureConfig{}, train_opts);
            save_isc_model(model, model_out);
            std::cout << "trained on " << images.size() << " images -> " << model_out << "\n";
        } else if (roc_cmd->parsed()) {
            const CsvTable table = read_csv(roc_csv);
            const int score_col = column_index(table, roc_score_col);
            const int label_col = column_index(table, roc_label_col);
            std::vector<double> scores;
            std::vector<int> labels;
            for (const auto& row : table.rows) {
                scores.push_back(parse_double(row[score_col]));
                labels.push_back(static_cast<int>(parse_double(row[label_col])));
            }
            const RocCurve curve = roc_curve(scores, labels);
            const YoudenResult youden = youden_threshold(curve);
            std::cout << "auc=" << format_double(auc(curve)) << "\n"
                      << "youden_threshold=" << format_double(youden.threshold) << "\n"
                      << "youden_j=" << format_double(youden.j_statistic) << "\n";
        } else if (loss_cmd->parsed()) {
            const DatasetManifest manifest = load_manifest(loss_manifest);
            std::vector<TripleEntry> entries;
            for (const auto& e : manifest.entries) {
                if (e.excluded) continue;
                entries.push_back({e.id, e.retina_path, e.synthetic_path, e.vessel_path});
            }
            FieldSupplier supplier;
            if (!loss_d_real.empty() || !loss_d_fake.empty()) {
                if (loss_d_real.empty() || loss_d_fake.empty()) {
                    throw CLI::ValidationError("loss", "--d-real and --d-fake must be given together");
                }
                const DiscriminatorField d_real = load_field_csv(loss_d_real);
                const DiscriminatorField d_fake = load_field_csv(loss_d_fake);
                supplier = [d_real, d_fake](const TripleEntry&) {
                    return std::optional(std::make_pair(d_real, d_fake));
                };
            }
            const TripleBatchResult result = score_triples(entries, loss_cfg, supplier);
            if (!loss_out.empty()) {
                std::ofstream out(loss_out, std::ios::binary);
                if (!out) throw std::runtime_error(loss_out + ": cannot open for writing");
                out << "id,l1,adv,combined,error\n";
                for (const auto& s : result.per_pair) {
                    out << s.id << ',';
                    if (s.ok) {
                        out << format_double(s.l1) << ',' << format_double(s.adv) << ','
                            << format_double(s.combined);
                    } else {
                        out << ",,";
                    }
                    out << ',' << s.error << '\n';
                }
            }
            for (const auto& s : result.per_pair) {
                if (!s.ok) std::cerr << "warning: " << s.id << ": " << s.error << "\n";
            }
            std::cout << "pairs=" << result.per_pair.size() - result.failures
                      << " failed=" << result.failures
                      << " mean_l1=" << format_double(result.mean_l1)
                      << " mean_adv=" << format_double(result.mean_adv)
                      << " mean_combined=" << format_double(result.mean_combined) << "\n";
        } else if (report_cmd->parsed()) {
            const auto real = load_score_csv(report_real);
            const auto synth = load_score_csv(report_synth);
            const QualityTable table = compare_report(real, synth, report_alpha, report_metric);
            std::cout << render_table_text(table);
            if (!report_out.empty()) write_table_csv(table, report_out);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
