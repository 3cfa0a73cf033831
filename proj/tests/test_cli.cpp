#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

#include "fundusqa/csv.hpp"
#include "fundusqa/image_io.hpp"
#include "fundusqa/pipeline.hpp"
#include "fundusqa/stats.hpp"
#include "support/fixtures.hpp"

using namespace fundusqa;
using namespace fundusqa::testsupport;
namespace fs = std::filesystem;

namespace {

#ifndef FUNDUSQA_CLI_PATH
#error "FUNDUSQA_CLI_PATH must point at the CLI binary"
#endif

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const fs::path out = fs::temp_directory_path() / "fundusqa_cli_tests" / "last_output.txt";
    fs::create_directories(out.parent_path());
    const std::string cmd =
        std::string(FUNDUSQA_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out);
    result.output.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return result;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "fundusqa_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help works on every subcommand, unknown commands exit 1") {
    CHECK(run_cli("--help").exit_code == 0);
    for (const char* sub : {"manifest", "split", "segment", "quality", "isc-train", "roc",
                            "loss", "report"}) {
        const RunResult r = run_cli(std::string(sub) + " --help");
        CHECK(r.exit_code == 0);
        CHECK(!r.output.empty());
    }
    CHECK(run_cli("quality qv --help").exit_code == 0);
    CHECK(run_cli("quality isc --help").exit_code == 0);

    const RunResult unknown = run_cli("frobnicate");
    CHECK(unknown.exit_code == 1);
    CHECK(unknown.output.find("Usage") != std::string::npos);

    CHECK(run_cli("").exit_code == 1);
}

TEST_CASE("quality qv scores a fixture directory") {
    const fs::path dir = fresh_dir("qv_dir");
    for (int i = 0; i < 3; ++i) {
        const auto fixture = make_fundus_fixture(500 + i, 96);
        save_png(fixture.image, (dir / ("img" + std::to_string(i) + ".png")).string());
    }
    const fs::path out = dir / "scores.csv";
    const RunResult r = run_cli("quality qv --in " + dir.string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    const auto scores = load_score_csv(out.string());
    REQUIRE(scores.size() == 3);
    for (const auto& [id, score] : scores) {
        CHECK(score >= 0.0);
        CHECK(score <= 1.0);
    }
}

TEST_CASE("split errors on a count mismatch with exit code 2") {
    const fs::path dir = fresh_dir("split_bad");
    DatasetManifest manifest;
    for (int i = 0; i < 900; ++i) {
        ManifestEntry e;
        e.id = "e" + std::to_string(i);
        e.retina_path = "r.png";
        e.vessel_path = "v.png";
        manifest.entries.push_back(std::move(e));
    }
    const fs::path path = dir / "m.jsonl";
    save_manifest(manifest, path.string());
    const RunResult r = run_cli("split --manifest " + path.string() +
                                " --counts 614,155,177 --seed 1 --out-prefix " +
                                (dir / "part").string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("946") != std::string::npos);
    CHECK(r.output.find("900") != std::string::npos);
}

TEST_CASE("split is deterministic per seed at the byte level") {
    const fs::path dir = fresh_dir("split_ok");
    DatasetManifest manifest;
    for (int i = 0; i < 40; ++i) {
        ManifestEntry e;
        e.id = "e" + std::to_string(i);
        e.retina_path = "r.png";
        e.vessel_path = "v.png";
        manifest.entries.push_back(std::move(e));
    }
    const fs::path path = dir / "m.jsonl";
    save_manifest(manifest, path.string());

    const std::string base = "split --manifest " + path.string() + " --counts 25,10,5 --seed 9";
    REQUIRE(run_cli(base + " --out-prefix " + (dir / "one").string()).exit_code == 0);
    REQUIRE(run_cli(base + " --out-prefix " + (dir / "two").string()).exit_code == 0);
    for (const char* part : {"_train.jsonl", "_val.jsonl", "_test.jsonl"}) {
        CHECK(slurp(dir / ("one" + std::string(part))) == slurp(dir / ("two" + std::string(part))));
    }
    const auto train = load_manifest((dir / "one_train.jsonl").string());
    CHECK(train.entries.size() == 25);
}

TEST_CASE("roc output matches the library on the same data") {
    const fs::path dir = fresh_dir("roc");
    const fs::path csv = dir / "scores.csv";
    std::vector<double> scores{0.1, 0.4, 0.35, 0.8, 0.7, 0.2};
    std::vector<int> labels{0, 0, 1, 1, 1, 0};
    {
        std::ofstream out(csv);
        out << "id,score,label\n";
        for (std::size_t i = 0; i < scores.size(); ++i) {
            out << i << ',' << format_double(scores[i]) << ',' << labels[i] << '\n';
        }
    }
    const RunResult r = run_cli("roc --scores " + csv.string() + " --labels-col label");
    REQUIRE(r.exit_code == 0);

    const RocCurve curve = roc_curve(scores, labels);
    const YoudenResult youden = youden_threshold(curve);
    CHECK(r.output.find("auc=" + format_double(auc(curve))) != std::string::npos);
    CHECK(r.output.find("youden_threshold=" + format_double(youden.threshold)) !=
          std::string::npos);
    CHECK(r.output.find("youden_j=" + format_double(youden.j_statistic)) != std::string::npos);
}

TEST_CASE("manifest then loss over identical pairs") {
    const fs::path dir = fresh_dir("loss");
    fs::create_directories(dir / "retina");
    fs::create_directories(dir / "vessel");
    fs::create_directories(dir / "synthetic");
    for (int i = 0; i < 3; ++i) {
        const auto fixture = make_fundus_fixture(700 + i, 64);
        const std::string name = "p" + std::to_string(i) + ".png";
        save_png(fixture.image, (dir / "retina" / name).string());
        save_png(fixture.image, (dir / "synthetic" / name).string());
        save_mask_png(fixture.stroke_mask, 64, 64, (dir / "vessel" / name).string());
    }
    const fs::path manifest = dir / "m.jsonl";
    REQUIRE(run_cli("manifest --retina-dir " + (dir / "retina").string() + " --vessel-dir " +
                    (dir / "vessel").string() + " --synthetic-dir " +
                    (dir / "synthetic").string() + " --out " + manifest.string())
                .exit_code == 0);

    const fs::path out = dir / "loss.csv";
    const RunResult r =
        run_cli("loss --manifest " + manifest.string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("mean_l1=0") != std::string::npos);
    const CsvTable table = read_csv(out.string());
    CHECK(table.rows.size() == 3);
    const int l1_col = column_index(table, "l1");
    for (const auto& row : table.rows) CHECK(parse_double(row[l1_col]) == 0.0);
}

TEST_CASE("report flags the sharp-vs-blurred gap") {
    const fs::path dir = fresh_dir("report");
    std::ofstream real(dir / "real.csv");
    std::ofstream synth(dir / "synth.csv");
    real << "id,score\n";
    synth << "id,score\n";
    for (int i = 0; i < 30; ++i) {
        real << "p" << i << ',' << format_double(0.25 + 0.003 * i + 0.01 * ((i * 3) % 4)) << '\n';
        synth << "p" << i << ',' << format_double(0.18 + 0.003 * i) << '\n';
    }
    real.close();
    synth.close();
    const fs::path out = dir / "table.csv";
    const RunResult r = run_cli("report --real " + (dir / "real.csv").string() +
                                " --synthetic " + (dir / "synth.csv").string() +
                                " --metric qv --out-csv " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("significant@0.05: yes") != std::string::npos);
    CHECK(fs::exists(out));

    const RunResult missing = run_cli("report --real " + (dir / "real.csv").string() +
                                      " --synthetic " + (dir / "nothere.csv").string());
    CHECK(missing.exit_code == 2);
}

TEST_CASE("isc-train then quality isc end to end") {
    const fs::path dir = fresh_dir("isc_flow");
    fs::create_directories(dir / "good");
    fs::create_directories(dir / "bad");
    for (int i = 0; i < 4; ++i) {
        const auto fixture = make_fundus_fixture(800 + i, 96);
        save_png(fixture.image, (dir / "good" / ("g" + std::to_string(i) + ".png")).string());
        save_png(blur_rgb(fixture.image, 5.0),
                 (dir / "bad" / ("b" + std::to_string(i) + ".png")).string());
    }
    const fs::path model = dir / "model.iscm";
    const RunResult train = run_cli("isc-train --good-dir " + (dir / "good").string() +
                                    " --bad-dir " + (dir / "bad").string() + " --seed 5" +
                                    " --sample-per-image 500 --epochs 60 --out " +
                                    model.string());
    REQUIRE(train.exit_code == 0);
    REQUIRE(fs::exists(model));

    const fs::path out = dir / "isc.csv";
    const RunResult score = run_cli("quality isc --in " + (dir / "good").string() +
                                    " --model " + model.string() + " --out " + out.string());
    REQUIRE(score.exit_code == 0);
    const auto rows = load_score_csv(out.string());
    REQUIRE(rows.size() == 4);
    for (const auto& [id, value] : rows) {
        CHECK(value >= 0.0);
        CHECK(value <= 1.0);
    }

    const RunResult missing = run_cli("quality isc --in " + (dir / "good").string() +
                                      " --model " + (dir / "nope.iscm").string() + " --out " +
                                      (dir / "x.csv").string());
    CHECK(missing.exit_code == 2);
}

TEST_CASE("loss accepts external discriminator fields") {
    const fs::path dir = fresh_dir("loss_fields");
    fs::create_directories(dir / "retina");
    fs::create_directories(dir / "vessel");
    fs::create_directories(dir / "synthetic");
    const auto fixture = make_fundus_fixture(901, 64);
    save_png(fixture.image, (dir / "retina" / "a.png").string());
    save_png(fixture.image, (dir / "synthetic" / "a.png").string());
    save_mask_png(fixture.stroke_mask, 64, 64, (dir / "vessel" / "a.png").string());
    const fs::path manifest = dir / "m.jsonl";
    REQUIRE(run_cli("manifest --retina-dir " + (dir / "retina").string() + " --vessel-dir " +
                    (dir / "vessel").string() + " --synthetic-dir " +
                    (dir / "synthetic").string() + " --out " + manifest.string())
                .exit_code == 0);
    {
        std::ofstream real(dir / "dreal.csv");
        real << "2,2\n0.9,0.9\n0.9,0.9\n";
        std::ofstream fake(dir / "dfake.csv");
        fake << "2,2\n0.25,0.25\n0.25,0.25\n";
    }
    const RunResult r = run_cli("loss --manifest " + manifest.string() + " --d-real " +
                                (dir / "dreal.csv").string() + " --d-fake " +
                                (dir / "dfake.csv").string());
    REQUIRE(r.exit_code == 0);
    const double expected = std::log(0.9) + std::log(0.75);
    CHECK(r.output.find("mean_adv=" + format_double(expected)) != std::string::npos);

    const RunResult half = run_cli("loss --manifest " + manifest.string() + " --d-real " +
                                   (dir / "dreal.csv").string());
    CHECK(half.exit_code == 1);
}

TEST_CASE("segment writes loadable vessel trees") {
    const fs::path dir = fresh_dir("segment");
    fs::create_directories(dir / "in");
    const auto fixture = make_fundus_fixture(900, 128);
    save_png(fixture.image, (dir / "in" / "f.png").string());
    const fs::path out_dir = dir / "trees";
    const RunResult r = run_cli("segment --in " + (dir / "in").string() + " --out-dir " +
                                out_dir.string() + " --threshold 0.05");
    REQUIRE(r.exit_code == 0);
    const BinaryVesselTree tree = load_vessel_tree((out_dir / "f.png").string());
    CHECK(tree.width == 128);
    CHECK(tree.height == 128);
    long long on = 0;
    for (uint8_t v : tree.data) on += v;
    CHECK(on > 0);
}

}  // TEST_SUITE
