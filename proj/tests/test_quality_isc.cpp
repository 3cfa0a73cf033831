#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "fundusqa/quality_isc.hpp"
#include "fundusqa/rng.hpp"
#include "reference/reference.hpp"
#include "support/fixtures.hpp"

using namespace fundusqa;
using namespace fundusqa::testsupport;
namespace fs = std::filesystem;

namespace {

FeatureMatrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
    FeatureMatrix m;
    m.rows = static_cast<long long>(rows.size());
    m.cols = static_cast<int>(rows.front().size());
    for (const auto& row : rows) m.data.insert(m.data.end(), row.begin(), row.end());
    return m;
}

FeatureMatrix two_clouds(uint64_t seed, int per_cloud = 60) {
    Rng rng(seed);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < per_cloud; ++i) {
        rows.push_back({rng.uniform_range(-0.1, 0.1), rng.uniform_range(-0.1, 0.1)});
    }
    for (int i = 0; i < per_cloud; ++i) {
        rows.push_back({10.0 + rng.uniform_range(-0.1, 0.1), 10.0 + rng.uniform_range(-0.1, 0.1)});
    }
    return matrix_from_rows(rows);
}

IscHistogram hist_of(std::initializer_list<double> values) {
    IscHistogram h;
    h.counts = values;
    return h;
}

}  // namespace

TEST_SUITE("quality_isc") {

TEST_CASE("feature dimension arithmetic") {
    IscFeatureConfig cfg;
    cfg.sigmas = {1.0, 2.0};
    cfg.derivative_orders = {{1, 0}, {0, 1}};
    cfg.include_raw_intensity = true;
    CHECK(cfg.feature_dim() == 15);
    CHECK(IscFeatureConfig{}.feature_dim() == 21);
}

TEST_CASE("constant image features collapse under standardization") {
    const RasterImage flat = RasterImage::filled(24, 24, 0.3f, 0.6f, 0.2f);
    const FovMask full = FovMask::full(24, 24);
    IscFeatureConfig intensity_only;
    intensity_only.sigmas = {};
    intensity_only.derivative_orders = {};

    const FeatureMatrix raw = extract_isc_features(flat, full, intensity_only, false);
    REQUIRE(raw.rows == 24 * 24);
    REQUIRE(raw.cols == 3);
    for (long long r = 1; r < raw.rows; ++r) {
        for (int c = 0; c < 3; ++c) CHECK(raw.at(r, c) == raw.at(0, c));
    }

    const FeatureMatrix standardized = extract_isc_features(flat, full, intensity_only, true);
    for (double v : standardized.data) CHECK(v == 0.0);

    const FeatureMatrix derivs = extract_isc_features(flat, full, IscFeatureConfig{}, false);
    for (long long r = 0; r < derivs.rows; ++r) {
        for (int c = 0; c < derivs.cols; ++c) {
            if ((c % 7) == 0) continue;  // raw-intensity columns
            CHECK(std::fabs(derivs.at(r, c)) <= 1e-9);
        }
    }
}

TEST_CASE("kmeans separates two point clouds") {
    const FeatureMatrix clouds = two_clouds(5);
    const ClusterModel model = kmeans_fit(clouds, 2, 7);
    std::vector<std::vector<double>> centers{{model.center(0)[0], model.center(0)[1]},
                                             {model.center(1)[0], model.center(1)[1]}};
    std::sort(centers.begin(), centers.end());
    CHECK(std::fabs(centers[0][0]) < 0.2);
    CHECK(std::fabs(centers[0][1]) < 0.2);
    CHECK(std::fabs(centers[1][0] - 10.0) < 0.2);
    CHECK(std::fabs(centers[1][1] - 10.0) < 0.2);
}

TEST_CASE("kmeans recovers exact constant colors") {
    std::vector<std::vector<double>> rows;
    const std::vector<std::vector<double>> colors{
        {0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 1.0, 0.5}, {0.3, 0.3, 0.3}, {0.9, 0.9, 0.1}};
    for (int rep = 0; rep < 100; ++rep) {
        for (const auto& c : colors) rows.push_back(c);
    }
    const ClusterModel model = kmeans_fit(matrix_from_rows(rows), 5, 3);
    for (const auto& color : colors) {
        bool found = false;
        for (int c = 0; c < 5; ++c) {
            if (model.center(c)[0] == color[0] && model.center(c)[1] == color[1] &&
                model.center(c)[2] == color[2]) {
                found = true;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("kmeans is deterministic and its inertia matches the brute-force oracle") {
    Rng rng(9);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 400; ++i) {
        rows.push_back({rng.normal(), rng.normal(), rng.normal()});
    }
    const FeatureMatrix data = matrix_from_rows(rows);
    KmeansFitInfo info_a, info_b;
    const ClusterModel a = kmeans_fit(data, 5, 42, 300, 1e-6, &info_a);
    const ClusterModel b = kmeans_fit(data, 5, 42, 300, 1e-6, &info_b);
    CHECK(a.centers == b.centers);
    CHECK(info_a.inertia_history == info_b.inertia_history);

    REQUIRE(!info_a.inertia_history.empty());
    for (std::size_t i = 1; i < info_a.inertia_history.size(); ++i) {
        CHECK(info_a.inertia_history[i] <= info_a.inertia_history[i - 1]);
    }
    CHECK(info_a.inertia_history.back() ==
          doctest::Approx(reference::kmeans_inertia_brute(data, a)).epsilon(1e-9));
}

TEST_CASE("kmeans error paths") {
    const FeatureMatrix tiny = matrix_from_rows({{0.0, 0.0}, {1.0, 1.0}});
    CHECK_THROWS_AS(kmeans_fit(tiny, 3, 0), std::invalid_argument);

    std::vector<std::vector<double>> dup_rows(10, std::vector<double>{1.0, 2.0});
    dup_rows.push_back({3.0, 4.0});
    CHECK_THROWS_AS(kmeans_fit(matrix_from_rows(dup_rows), 3, 0), std::invalid_argument);
}

TEST_CASE("kmeans empty-cluster repair reseeds to the farthest point") {
    // A warm start with a center stranded between two clouds: every point is
    // closer to a cloud center, so the middle center empties immediately.
    Rng rng(31);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 50; ++i) rows.push_back({rng.uniform_range(-0.01, 0.01), 0.0});
    for (int i = 0; i < 50; ++i) rows.push_back({100.0 + rng.uniform_range(-0.01, 0.01), 0.0});
    rows.push_back({50.0, 80.0});  // lone outlier, the farthest point
    const FeatureMatrix data = matrix_from_rows(rows);

    KmeansFitInfo info;
    const ClusterModel model =
        kmeans_fit_warm(data, 3, {0.0, 0.0, 50.0, -80.0, 100.0, 0.0}, 300, 1e-9, &info);
    CHECK(info.repairs >= 1);
    const auto assign = kmeans_assign(data, model);
    std::vector<long long> counts(3, 0);
    for (int a : assign) ++counts[a];
    for (long long c : counts) CHECK(c > 0);
    for (std::size_t i = 1; i < info.inertia_history.size(); ++i) {
        CHECK(info.inertia_history[i] <= info.inertia_history[i - 1]);
    }
    // The outlier must have become a center.
    bool outlier_is_center = false;
    for (int c = 0; c < 3; ++c) {
        if (model.center(c)[0] == 50.0 && model.center(c)[1] == 80.0) outlier_is_center = true;
    }
    CHECK(outlier_is_center);
}

TEST_CASE("histogram basics") {
    std::vector<std::vector<double>> center_rows{{0.0, 0.0}, {5.0, 0.0}, {0.0, 5.0},
                                                 {5.0, 5.0}, {2.5, 2.5}};
    ClusterModel model;
    model.k = 5;
    model.feature_dim = 2;
    for (const auto& row : center_rows) {
        model.centers.insert(model.centers.end(), row.begin(), row.end());
    }

    const FeatureMatrix all_center2 = matrix_from_rows(
        {{0.0, 5.0}, {0.0, 5.0}, {0.1, 4.9}, {0.0, 5.1}});
    const IscHistogram h = isc_histogram(all_center2, model);
    CHECK(h.counts == std::vector<double>{0.0, 0.0, 1.0, 0.0, 0.0});

    const FeatureMatrix split = matrix_from_rows({{0.0, 0.0}, {5.0, 0.0}});
    const IscHistogram h2 = isc_histogram(split, model);
    CHECK(h2.counts == std::vector<double>{0.5, 0.5, 0.0, 0.0, 0.0});

    FeatureMatrix wrong = split;
    wrong.cols = 3;
    wrong.rows = 1;
    wrong.data.resize(3);
    CHECK_THROWS_AS(isc_histogram(wrong, model), std::invalid_argument);
}

TEST_CASE("histogram of concatenated sets is the weighted mean") {
    Rng rng(14);
    std::vector<std::vector<double>> rows_a, rows_b;
    for (int i = 0; i < 37; ++i) rows_a.push_back({rng.normal(), rng.normal()});
    for (int i = 0; i < 91; ++i) rows_b.push_back({rng.normal(), rng.normal()});
    auto all = rows_a;
    all.insert(all.end(), rows_b.begin(), rows_b.end());

    const ClusterModel model = kmeans_fit(matrix_from_rows(all), 4, 2);
    const IscHistogram ha = isc_histogram(matrix_from_rows(rows_a), model);
    const IscHistogram hb = isc_histogram(matrix_from_rows(rows_b), model);
    const IscHistogram hall = isc_histogram(matrix_from_rows(all), model);
    const double wa = 37.0 / 128.0;
    const double wb = 91.0 / 128.0;
    double total = 0.0;
    for (std::size_t c = 0; c < hall.counts.size(); ++c) {
        CHECK(hall.counts[c] ==
              doctest::Approx(wa * ha.counts[c] + wb * hb.counts[c]).epsilon(1e-9));
        total += hall.counts[c];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("svm separates separable histograms perfectly") {
    std::vector<IscHistogram> data;
    std::vector<int> labels;
    for (int i = 0; i < 10; ++i) {
        data.push_back(hist_of({1.0, 0.0, 0.0}));
        labels.push_back(1);
        data.push_back(hist_of({0.0, 1.0, 0.0}));
        labels.push_back(0);
    }
    const SvmModel model = svm_train(data, labels, 10.0, 300, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double f = svm_decision(model, data[i]);
        CHECK((f > 0.0) == (labels[i] == 1));
        const double p = svm_probability(model, data[i]);
        CHECK((p > 0.5) == (labels[i] == 1));
    }
    CHECK(model.calib_slope > 0.0);
}

TEST_CASE("flipping labels negates the decision function exactly") {
    Rng rng(8);
    std::vector<IscHistogram> data;
    std::vector<int> labels, flipped;
    for (int i = 0; i < 30; ++i) {
        IscHistogram h;
        double total = 0.0;
        for (int c = 0; c < 5; ++c) {
            h.counts.push_back(rng.uniform());
            total += h.counts.back();
        }
        for (double& v : h.counts) v /= total;
        data.push_back(h);
        labels.push_back(static_cast<int>(rng.below(2)));
    }
    labels[0] = 1;
    labels[1] = 0;
    for (int l : labels) flipped.push_back(1 - l);

    const SvmModel a = svm_train(data, labels, 5.0, 200, 0);
    const SvmModel b = svm_train(data, flipped, 5.0, 200, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double fa = svm_decision(a, data[i]);
        const double fb = svm_decision(b, data[i]);
        CHECK(fb == -fa);
    }
}

TEST_CASE("svm objective decreases across epoch checkpoints") {
    Rng rng(23);
    std::vector<IscHistogram> data;
    std::vector<int> labels;
    for (int i = 0; i < 50; ++i) {
        IscHistogram h;
        double total = 0.0;
        for (int c = 0; c < 5; ++c) {
            h.counts.push_back(rng.uniform());
            total += h.counts.back();
        }
        for (double& v : h.counts) v /= total;
        // Weak signal on top of noise.
        const int label = i % 2;
        h.counts[0] += label ? 0.05 : 0.0;
        data.push_back(h);
        labels.push_back(label);
    }
    double prev = svm_objective(data, labels, 10.0, SvmModel{std::vector<double>(5, 0.0), 0.0});
    for (int epochs = 10; epochs <= 100; epochs += 10) {
        const SvmModel model = svm_train(data, labels, 10.0, epochs, 0);
        const double objective = svm_objective(data, labels, 10.0, model);
        CHECK(objective <= prev + 1e-12);
        prev = objective;
    }
}

TEST_CASE("svm rejects single-class input") {
    std::vector<IscHistogram> data{hist_of({1.0, 0.0}), hist_of({0.9, 0.1})};
    std::vector<int> labels{1, 1};
    CHECK_THROWS_AS(svm_train(data, labels, 1.0, 10, 0), std::invalid_argument);
}

TEST_CASE("duplicating the whole training set reproduces identical weights") {
    Rng rng(77);
    std::vector<IscHistogram> data;
    std::vector<int> labels;
    for (int i = 0; i < 21; ++i) {  // odd count: splits must still line up
        IscHistogram h;
        double total = 0.0;
        for (int c = 0; c < 5; ++c) {
            h.counts.push_back(rng.uniform());
            total += h.counts.back();
        }
        for (double& v : h.counts) v /= total;
        data.push_back(h);
        labels.push_back(static_cast<int>(rng.below(2)));
    }
    labels[0] = 1;
    labels[1] = 0;
    auto doubled = data;
    doubled.insert(doubled.end(), data.begin(), data.end());
    auto doubled_labels = labels;
    doubled_labels.insert(doubled_labels.end(), labels.begin(), labels.end());

    const SvmModel a = svm_train(data, labels, 4.0, 150, 0);
    const SvmModel b = svm_train(doubled, doubled_labels, 4.0, 150, 0);
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);
}

TEST_CASE("isc scores separate clean from degraded fixtures") {
    std::vector<RasterImage> images;
    std::vector<int> labels;
    for (uint64_t seed = 1; seed <= 12; ++seed) {
        const auto fixture = make_fundus_fixture(seed, 128);
        images.push_back(fixture.image);
        labels.push_back(1);
        images.push_back(chroma_noise(blur_rgb(fixture.image, 6.0), 0.08, seed * 31 + 1));
        labels.push_back(0);
    }
    IscTrainOptions opts;
    opts.seed = 5;
    opts.sample_per_image = 1500;
    const IscModel model = train_isc_model(images, labels, IscFeatureConfig{}, opts);

    const auto held_clean = make_fundus_fixture(91, 128);
    const auto held_bad = chroma_noise(blur_rgb(held_clean.image, 6.0), 0.08, 4242);
    const FovMask mask_clean = detect_fov(held_clean.image);
    const FovMask mask_bad = detect_fov(held_bad);
    const double clean_score =
        isc_score(held_clean.image, mask_clean, model.cluster, model.svm, model.cfg);
    const double bad_score = isc_score(held_bad, mask_bad, model.cluster, model.svm, model.cfg);
    CHECK(clean_score >= 0.5);
    CHECK(bad_score < clean_score);
    CHECK(clean_score <= 1.0);
    CHECK(bad_score >= 0.0);
}

TEST_CASE("isc score ignores pixel geometry for intensity-only features") {
    const auto fixture = make_fundus_fixture(55, 96);
    const FovMask mask = detect_fov(fixture.image);

    IscFeatureConfig intensity_only;
    intensity_only.sigmas = {};
    intensity_only.derivative_orders = {};

    // Tiny synthetic model over the 3 intensity features.
    std::vector<std::vector<double>> seeds;
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        seeds.push_back({rng.uniform_range(-2, 2), rng.uniform_range(-2, 2),
                         rng.uniform_range(-2, 2)});
    }
    ClusterModel cluster = kmeans_fit(matrix_from_rows(seeds), 5, 3);
    cluster.config_fingerprint = feature_config_fingerprint(intensity_only);
    SvmModel svm;
    svm.weights = {0.4, -0.2, 0.3, 0.1, -0.5};
    svm.bias = 0.05;

    const double base = isc_score(fixture.image, mask, cluster, svm, intensity_only);

    // Scramble the FOV pixels with a seeded permutation.
    RasterImage scrambled = fixture.image;
    std::vector<std::size_t> fov_pixels;
    for (std::size_t p = 0; p < mask.data.size(); ++p) {
        if (mask.data[p]) fov_pixels.push_back(p);
    }
    Rng shuffle_rng(99);
    for (std::size_t i = 0; i + 1 < fov_pixels.size(); ++i) {
        const std::size_t j = i + shuffle_rng.below(fov_pixels.size() - i);
        for (int c = 0; c < 3; ++c) {
            std::swap(scrambled.data[fov_pixels[i] * 3 + c],
                      scrambled.data[fov_pixels[j] * 3 + c]);
        }
    }
    const double moved = isc_score(scrambled, mask, cluster, svm, intensity_only);
    CHECK(moved == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("model file round trip, fingerprint and magic checks") {
    const fs::path dir = fs::temp_directory_path() / "fundusqa_isc_tests";
    fs::create_directories(dir);
    const fs::path path = dir / "model.iscm";

    std::vector<RasterImage> images;
    std::vector<int> labels;
    for (uint64_t seed = 1; seed <= 4; ++seed) {
        const auto fixture = make_fundus_fixture(seed, 96);
        images.push_back(fixture.image);
        labels.push_back(1);
        images.push_back(blur_rgb(fixture.image, 5.0));
        labels.push_back(0);
    }
    IscTrainOptions opts;
    opts.sample_per_image = 800;
    opts.epochs = 100;
    const IscModel model = train_isc_model(images, labels, IscFeatureConfig{}, opts);
    save_isc_model(model, path.string());
    const IscModel loaded = load_isc_model(path.string());
    CHECK(loaded.cluster.centers == model.cluster.centers);
    CHECK(loaded.svm.weights == model.svm.weights);
    CHECK(loaded.svm.bias == model.svm.bias);
    CHECK(loaded.svm.calib_slope == model.svm.calib_slope);
    CHECK(loaded.cfg.sigmas == model.cfg.sigmas);

    // Mismatched fingerprint must be rejected.
    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    bytes[6] ^= 0x5a;  // corrupt the stored fingerprint
    const fs::path bad = dir / "bad.iscm";
    std::ofstream(bad, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_AS(load_isc_model(bad.string()), std::runtime_error);

    const fs::path junk = dir / "junk.iscm";
    std::ofstream(junk, std::ios::binary) << "XXXX not a model";
    CHECK_THROWS_AS(load_isc_model(junk.string()), std::runtime_error);

    IscFeatureConfig other_cfg;
    other_cfg.sigmas = {1.0};
    const FovMask mask = detect_fov(images[0]);
    CHECK_THROWS_AS(isc_score(images[0], mask, model.cluster, model.svm, other_cfg),
                    std::invalid_argument);
}

TEST_CASE("identical training seeds produce identical model files") {
    std::vector<RasterImage> images;
    std::vector<int> labels;
    for (uint64_t seed = 10; seed <= 13; ++seed) {
        const auto fixture = make_fundus_fixture(seed, 96);
        images.push_back(fixture.image);
        labels.push_back(1);
        images.push_back(blur_rgb(fixture.image, 5.0));
        labels.push_back(0);
    }
    IscTrainOptions opts;
    opts.seed = 77;
    opts.sample_per_image = 500;
    opts.epochs = 50;
    const IscModel a = train_isc_model(images, labels, IscFeatureConfig{}, opts);
    const IscModel b = train_isc_model(images, labels, IscFeatureConfig{}, opts);

    const fs::path dir = fs::temp_directory_path() / "fundusqa_isc_tests";
    fs::create_directories(dir);
    save_isc_model(a, (dir / "a.iscm").string());
    save_isc_model(b, (dir / "b.iscm").string());
    std::ifstream fa(dir / "a.iscm", std::ios::binary);
    std::ifstream fb(dir / "b.iscm", std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(fa)),
                              std::istreambuf_iterator<char>());
    const std::string bytes_b((std::istreambuf_iterator<char>(fb)),
                              std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
    CHECK(!bytes_a.empty());
}

}  // TEST_SUITE
