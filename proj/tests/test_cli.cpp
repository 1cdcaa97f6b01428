#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fetalpose/cli.hpp"
#include "fetalpose/train/config.hpp"
#include "fetalpose/train/trainer.hpp"
#include "fetalpose/volume.hpp"
#include "testutil.hpp"

using namespace fetalpose;
namespace fs = std::filesystem;

namespace {

void write_file(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    os << text;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("gen-data writes count volumes, a manifest, and is reproducible") {
    const auto dir = testutil::scratch_dir("cli_gen");
    CHECK(run_cli({"gen-data", "--count", "4", "--out", dir + "/d1", "--seed", "5"}) == 0);
    CHECK(fs::exists(dir + "/d1/manifest.txt"));
    int files = 0;
    for (auto& e : fs::directory_iterator(dir + "/d1")) {
        if (e.path().extension() == ".lsv") ++files;
    }
    CHECK(files == 4);
    {
        std::ifstream mf(dir + "/d1/manifest.txt");
        int lines = 0;
        std::string line;
        while (std::getline(mf, line)) {
            if (!line.empty()) ++lines;
        }
        CHECK(lines == 4);
    }

    CHECK(run_cli({"gen-data", "--count", "4", "--out", dir + "/d2", "--seed", "5"}) == 0);
    CHECK(testutil::files_identical(dir + "/d1/vol_00000.lsv", dir + "/d2/vol_00000.lsv"));
    CHECK(testutil::files_identical(dir + "/d1/vol_00003.lsv", dir + "/d2/vol_00003.lsv"));

    SUBCASE("count 0 still succeeds with an empty manifest") {
        CHECK(run_cli({"gen-data", "--count", "0", "--out", dir + "/d0"}) == 0);
        CHECK(slurp(dir + "/d0/manifest.txt").empty());
    }
    fs::remove_all(dir);
}

TEST_CASE("flag precedence: command line > config file > defaults") {
    const auto dir = testutil::scratch_dir("cli_prec");
    // Use gen-data (cheap) and verify through phantom.dims in the volumes.
    write_file(dir + "/cfg.txt", "phantom.dims = 20\nphantom.figure_scale = 0.35\n"
                                 "phantom.head_radius = 1.8\nphantom.torso_radii_x_unused = 0\n");

    // The config key above that does not exist must fail with exit 2.
    CHECK(run_cli({"gen-data", "--count", "1", "--out", dir + "/bad", "--config",
                   dir + "/cfg.txt"}) == 2);

    write_file(dir + "/cfg.txt",
               "phantom.dims = 20\nphantom.figure_scale = 0.35\nphantom.head_radius = 1.8\n"
               "phantom.translation_range = 0.5\n");

    SUBCASE("defaults apply without a config") {
        CHECK(run_cli({"gen-data", "--count", "1", "--out", dir + "/def"}) == 0);
        CHECK(load_volume(dir + "/def/vol_00000.lsv").dims.x == 48);
    }
    SUBCASE("config file overrides the default") {
        CHECK(run_cli({"gen-data", "--count", "1", "--out", dir + "/file", "--config",
                       dir + "/cfg.txt"}) == 0);
        CHECK(load_volume(dir + "/file/vol_00000.lsv").dims.x == 20);
    }
    SUBCASE("--set overrides the config file") {
        CHECK(run_cli({"gen-data", "--count", "1", "--out", dir + "/flag", "--config",
                       dir + "/cfg.txt", "--set", "phantom.dims=24"}) == 0);
        CHECK(load_volume(dir + "/flag/vol_00000.lsv").dims.x == 24);
    }
    fs::remove_all(dir);
}

TEST_CASE("train is deterministic end to end and resumable via the CLI") {
    const auto dir = testutil::scratch_dir("cli_train");
    write_file(dir + "/cfg.txt",
               "net.preset = tiny\nphantom.dims = 24\nphantom.figure_scale = 0.42\n"
               "phantom.head_radius = 2.2\nphantom.translation_range = 0.6\n"
               "phantom.limb_radius = 1.2\nphantom.eye_radius = 1.0\n"
               "train.replay_capacity = 64\ntrain.episode_horizon = 12\n"
               "train.metrics_period = 5\n");
    CHECK(run_cli({"gen-data", "--count", "3", "--out", dir + "/data", "--config",
                   dir + "/cfg.txt"}) == 0);

    const std::string data = dir + "/data/manifest.txt";
    CHECK(run_cli({"train", "--config", dir + "/cfg.txt", "--data", data, "--out", dir + "/a",
                   "--deterministic", "--steps", "30"}) == 0);
    CHECK(run_cli({"train", "--config", dir + "/cfg.txt", "--data", data, "--out", dir + "/b",
                   "--deterministic", "--steps", "30"}) == 0);
    CHECK(testutil::files_identical(dir + "/a/checkpoint.lsc", dir + "/b/checkpoint.lsc"));

    // Interrupt at 15 and resume to 30.
    CHECK(run_cli({"train", "--config", dir + "/cfg.txt", "--data", data, "--out", dir + "/c",
                   "--deterministic", "--steps", "15"}) == 0);
    CHECK(run_cli({"train", "--data", data, "--out", dir + "/c", "--resume",
                   dir + "/c/checkpoint.lsc", "--steps", "30"}) == 0);
    CHECK(testutil::files_identical(dir + "/a/checkpoint.lsc", dir + "/c/checkpoint.lsc"));

    SUBCASE("config written to the output directory reflects the effective run") {
        const auto cfg = load_config_file(dir + "/a/config.txt");
        CHECK(cfg.synchronous == true);
        CHECK(cfg.n_actors == 1);
        CHECK(cfg.total_learner_steps == 30);
    }

    SUBCASE("trace exports 15 per-agent files with unit-step rows") {
        CHECK(run_cli({"trace", "--checkpoint", dir + "/a/checkpoint.lsc", "--volume",
                       dir + "/data/vol_00000.lsv", "--out", dir + "/tr", "--seed", "3",
                       "--max-steps", "25"}) == 0);
        for (const auto& name : landmark_names()) {
            REQUIRE(fs::exists(dir + "/tr/trace_" + name + ".txt"));
        }
        // identical rerun
        CHECK(run_cli({"trace", "--checkpoint", dir + "/a/checkpoint.lsc", "--volume",
                       dir + "/data/vol_00000.lsv", "--out", dir + "/tr2", "--seed", "3",
                       "--max-steps", "25"}) == 0);
        CHECK(testutil::files_identical(dir + "/tr/trace_bladder.txt",
                                        dir + "/tr2/trace_bladder.txt"));
        // rows move by at most one voxel per axis per step
        std::ifstream tf(dir + "/tr/trace_wrist_L.txt");
        std::string line;
        std::getline(tf, line);  // header
        int pt = -1, px = 0, py = 0, pz = 0;
        int rows = 0;
        while (tf >> pt) {
            int x, y, z;
            tf >> x >> y >> z;
            if (rows > 0) {
                REQUIRE(std::abs(x - px) <= 1);
                REQUIRE(std::abs(y - py) <= 1);
                REQUIRE(std::abs(z - pz) <= 1);
            }
            px = x;
            py = y;
            pz = z;
            ++rows;
        }
        CHECK(rows >= 2);
        CHECK(rows <= 26);
    }

    SUBCASE("eval on a checkpoint emits the full report") {
        CHECK(run_cli({"eval", "--checkpoint", dir + "/a/checkpoint.lsc", "--data", data,
                       "--repeats", "2", "--out", dir + "/ev"}) == 0);
        const auto csv = slurp(dir + "/ev/eval_metrics.csv");
        for (const auto& name : landmark_names()) CHECK(csv.find(name) != std::string::npos);
        CHECK(csv.find("all,") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("eval oracle stub: PCK 100 at default threshold, exact-hit behavior at 0") {
    const auto dir = testutil::scratch_dir("cli_eval");
    // Integer landmarks -> oracle placement is exact.
    LabeledVolume v;
    v.dims = {16, 16, 16};
    v.spacing_mm = {3, 3, 3};
    v.voxels.assign(v.voxel_count(), 0.0f);
    for (int k = 0; k < kNumLandmarks; ++k) v.landmarks_gt[k] = {double(k % 8 + 4), 8.0, 8.0};
    fs::create_directories(dir + "/data");
    save_volume(v, dir + "/data/vol_00000.lsv");
    write_file(dir + "/data/manifest.txt", "0 vol_00000.lsv 1\n");

    CHECK(run_cli({"eval", "--oracle-stub", "--data", dir + "/data/manifest.txt", "--out",
                   dir + "/ev"}) == 0);
    const auto csv = slurp(dir + "/ev/eval_metrics.csv");
    CHECK(csv.find("all,100.0000,0.0000") != std::string::npos);

    CHECK(run_cli({"eval", "--oracle-stub", "--data", dir + "/data/manifest.txt",
                   "--threshold-mm", "0", "--out", dir + "/ev0"}) == 0);
    CHECK(slurp(dir + "/ev0/eval_metrics.csv").find("all,100.0000") != std::string::npos);

    // Non-integer landmarks cannot be exact hits at threshold 0.
    for (int k = 0; k < kNumLandmarks; ++k) v.landmarks_gt[k].x += 0.5;
    save_volume(v, dir + "/data/vol_00000.lsv");
    CHECK(run_cli({"eval", "--oracle-stub", "--data", dir + "/data/manifest.txt",
                   "--threshold-mm", "0", "--out", dir + "/ev1"}) == 0);
    CHECK(slurp(dir + "/ev1/eval_metrics.csv").find("all,0.0000") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("exit codes: 2 config, 3 format, 4 runtime") {
    const auto dir = testutil::scratch_dir("cli_exit");
    CHECK(run_cli({"gen-data", "--count", "1", "--out", dir + "/x", "--set", "nonsense=1"}) == 2);

    write_file(dir + "/junk.lsv", "this is not a volume");
    write_file(dir + "/mani.txt", "0 junk.lsv 1\n");
    CHECK(run_cli({"eval", "--oracle-stub", "--data", dir + "/mani.txt"}) == 3);

    CHECK(run_cli({"eval", "--oracle-stub", "--data", dir + "/does_not_exist.txt"}) == 4);
    fs::remove_all(dir);
}
