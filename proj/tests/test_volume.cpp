#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fetalpose/errors.hpp"
#include "fetalpose/volume.hpp"
#include "testutil.hpp"

using namespace fetalpose;
namespace fs = std::filesystem;

namespace {

LabeledVolume random_volume(IVec3 dims, uint64_t seed) {
    LabeledVolume v;
    v.dims = dims;
    v.spacing_mm = {3.0, 3.0, 3.0};
    v.voxels.resize(v.voxel_count());
    Rng rng(seed);
    for (auto& x : v.voxels) x = static_cast<float>(rng.uniform_real(-1.0, 1.0));
    for (int k = 0; k < kNumLandmarks; ++k) {
        v.landmarks_gt[k] = {rng.uniform_real(0, dims.x - 1), rng.uniform_real(0, dims.y - 1),
                             rng.uniform_real(0, dims.z - 1)};
    }
    v.meta["tag"] = "random";
    return v;
}

// Naive gather oracle for extract_patch.
std::vector<float> naive_patch(const LabeledVolume& v, IVec3 center, int size) {
    std::vector<float> out(static_cast<size_t>(size) * size * size, 0.0f);
    const int half = size / 2;
    for (int qz = 0; qz < size; ++qz) {
        for (int qy = 0; qy < size; ++qy) {
            for (int qx = 0; qx < size; ++qx) {
                const int x = center.x - half + qx;
                const int y = center.y - half + qy;
                const int z = center.z - half + qz;
                if (x >= 0 && x < v.dims.x && y >= 0 && y < v.dims.y && z >= 0 && z < v.dims.z) {
                    out[qx + static_cast<size_t>(size) * (qy + static_cast<size_t>(size) * qz)] =
                        v.at(x, y, z);
                }
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("LSV1 round trip is bit-exact") {
    const auto dir = testutil::scratch_dir("lsv");
    const auto v = random_volume({20, 17, 23}, 5);
    const std::string path = dir + "/v.lsv";
    save_volume(v, path);
    const auto w = load_volume(path);
    CHECK(w.dims == v.dims);
    CHECK(w.voxels == v.voxels);
    CHECK(w.spacing_mm == v.spacing_mm);
    for (int k = 0; k < kNumLandmarks; ++k) CHECK(w.landmarks_gt[k] == v.landmarks_gt[k]);
    CHECK(w.meta.at("tag") == "random");

    // Saving the loaded volume reproduces the file byte for byte.
    save_volume(w, dir + "/v2.lsv");
    CHECK(testutil::files_identical(path, dir + "/v2.lsv"));
    fs::remove_all(dir);
}

TEST_CASE("LSV1 corruption cases") {
    const auto dir = testutil::scratch_dir("lsv_bad");
    const auto v = random_volume({8, 8, 8}, 6);
    const std::string path = dir + "/v.lsv";
    save_volume(v, path);

    SUBCASE("truncated payload") {
        const auto all = fs::file_size(path);
        fs::resize_file(path, all - 12);
        CHECK_THROWS_AS(load_volume(path), FormatError);
    }
    SUBCASE("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
        f.close();
        CHECK_THROWS_AS(load_volume(path), FormatError);
    }
    SUBCASE("payload longer than header dims") {
        std::ofstream f(path, std::ios::app | std::ios::binary);
        const float extra = 1.0f;
        f.write(reinterpret_cast<const char*>(&extra), 4);
        f.close();
        CHECK_THROWS_AS(load_volume(path), FormatError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_volume(dir + "/nope.lsv"), IoError); }
    fs::remove_all(dir);
}

TEST_CASE("extract_patch") {
    const auto v = random_volume({96, 96, 96}, 7);

    SUBCASE("interior crop equals the direct sub-array") {
        const auto p = extract_patch(v, {48, 48, 48}, 48);
        CHECK(p == naive_patch(v, {48, 48, 48}, 48));
        // spot check one voxel mapping: patch index 24 is the center
        CHECK(p[24 + 48 * (24 + 48 * 24)] == v.at(48, 48, 48));
    }
    SUBCASE("corner center zero-pads everything but one octant") {
        const auto p = extract_patch(v, {0, 0, 0}, 48);
        CHECK(p == naive_patch(v, {0, 0, 0}, 48));
        for (int qz = 0; qz < 48; ++qz) {
            for (int qy = 0; qy < 48; ++qy) {
                for (int qx = 0; qx < 48; ++qx) {
                    const bool inside = qx >= 24 && qy >= 24 && qz >= 24;
                    const float val = p[qx + 48 * (qy + 48 * static_cast<size_t>(qz))];
                    if (!inside) REQUIRE(val == 0.0f);
                }
            }
        }
    }
    SUBCASE("random centers match the naive oracle exactly, even far outside") {
        Rng rng(8);
        for (int i = 0; i < 60; ++i) {
            const IVec3 c{rng.uniform_int(-50, 150), rng.uniform_int(-50, 150),
                          rng.uniform_int(-50, 150)};
            const int size = (i % 2) ? 24 : 17;
            REQUIRE(extract_patch(v, c, size) == naive_patch(v, c, size));
        }
    }
}

TEST_CASE("env_step") {
    const IVec3 dims{10, 12, 14};
    std::array<IVec3, kNumLandmarks> pos{};
    std::array<Action, kNumLandmarks> acts{};

    SUBCASE("unit move along -x") {
        pos[0] = {5, 5, 5};
        acts[0] = Action::neg_x;
        const auto out = env_step(pos, acts, dims, 1);
        CHECK(out[0] == IVec3{4, 5, 5});
    }
    SUBCASE("boundary clamp") {
        pos[0] = {0, 5, 5};
        acts[0] = Action::neg_x;
        CHECK(env_step(pos, acts, dims, 1)[0] == IVec3{0, 5, 5});
        pos[1] = {9, 5, 5};
        acts[1] = Action::pos_x;
        CHECK(env_step(pos, acts, dims, 1)[1] == IVec3{9, 5, 5});
    }
    SUBCASE("interior actions invert") {
        Rng rng(9);
        for (int i = 0; i < 200; ++i) {
            std::array<IVec3, kNumLandmarks> p{};
            std::array<Action, kNumLandmarks> fwd{}, bwd{};
            for (int k = 0; k < kNumLandmarks; ++k) {
                p[k] = {rng.uniform_int(1, dims.x - 2), rng.uniform_int(1, dims.y - 2),
                        rng.uniform_int(1, dims.z - 2)};
                const int a = static_cast<int>(rng.uniform_index(kNumActions));
                fwd[k] = static_cast<Action>(a);
                bwd[k] = static_cast<Action>(a % 2 == 0 ? a + 1 : a - 1);  // opposite sign
            }
            const auto q = env_step(env_step(p, fwd, dims, 1), bwd, dims, 1);
            for (int k = 0; k < kNumLandmarks; ++k) REQUIRE(q[k] == p[k]);
        }
    }
}

TEST_CASE("initial_positions") {
    SUBCASE("inner box for D=100 is [43,57]") {
        const auto [lo, hi] = initial_position_box({100, 100, 100}, 0.15);
        CHECK(lo == IVec3{43, 43, 43});
        CHECK(hi == IVec3{57, 57, 57});
        Rng rng(10);
        for (int i = 0; i < 200; ++i) {
            const auto pos = initial_positions({100, 100, 100}, rng, 0.15);
            for (const auto& p : pos) {
                for (int a = 0; a < 3; ++a) {
                    REQUIRE(p[a] >= 43);
                    REQUIRE(p[a] <= 57);
                }
            }
        }
    }
    SUBCASE("deterministic per seed") {
        Rng a(77), b(77);
        CHECK(initial_positions({48, 48, 48}, a) == initial_positions({48, 48, 48}, b));
    }
    SUBCASE("uniform over the box (chi-square)") {
        const auto [lo, hi] = initial_position_box({100, 100, 100}, 0.15);
        const int side = hi.x - lo.x + 1;
        std::vector<long> counts(side, 0);
        Rng rng(123);
        for (int i = 0; i < 10000; ++i) {
            const auto pos = initial_positions({100, 100, 100}, rng, 0.15);
            counts[pos[0].x - lo.x]++;  // first agent, x axis
        }
        CHECK(testutil::chi2_uniform_pvalue(counts) > 0.001);
    }
}
