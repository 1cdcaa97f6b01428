#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fetalpose/augment.hpp"
#include "fetalpose/phantom.hpp"

using namespace fetalpose;

namespace {

LabeledVolume make_volume() {
    PhantomSpec spec;
    spec.noise_sigma = 0.02;
    return generate_phantom(spec, 21);
}

std::vector<double> pairwise_distances(const std::array<Vec3, kNumLandmarks>& lms) {
    std::vector<double> out;
    for (int i = 0; i < kNumLandmarks; ++i) {
        for (int j = i + 1; j < kNumLandmarks; ++j) out.push_back(distance(lms[i], lms[j]));
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("identity draw returns the input bit-exactly") {
    const auto v = make_volume();
    AugmentDraw id;  // no flips, 0 quarter turns, scale 1.0
    const auto w = augment(v, id);
    CHECK(w.dims == v.dims);
    CHECK(w.voxels == v.voxels);
    for (int k = 0; k < kNumLandmarks; ++k) CHECK(w.landmarks_gt[k] == v.landmarks_gt[k]);
}

TEST_CASE("lateral flip mirrors coordinates and swaps L/R labels") {
    const auto v = make_volume();
    AugmentDraw d;
    d.flip = {true, false, false};
    const auto w = augment(v, d);

    const int wl = static_cast<int>(LandmarkId::wrist_L);
    const int wr = static_cast<int>(LandmarkId::wrist_R);
    const int el = static_cast<int>(LandmarkId::elbow_L);
    const int bl = static_cast<int>(LandmarkId::bladder);

    // The voxel that held wrist_L now holds the label wrist_R at mirrored x.
    CHECK(w.landmarks_gt[wr].x ==
          doctest::Approx((v.dims.x - 1) - v.landmarks_gt[wl].x).epsilon(1e-12));
    CHECK(w.landmarks_gt[wr].y == v.landmarks_gt[wl].y);
    // Bladder has no partner; it just mirrors.
    CHECK(w.landmarks_gt[bl].x ==
          doctest::Approx((v.dims.x - 1) - v.landmarks_gt[bl].x).epsilon(1e-12));
    // Isometry: wrist_L-elbow_L distance is preserved (on the swapped labels).
    CHECK(distance(w.landmarks_gt[wl], w.landmarks_gt[el]) ==
          doctest::Approx(distance(v.landmarks_gt[wl], v.landmarks_gt[el])).epsilon(1e-9));

    // Voxel content mirrored.
    CHECK(w.at(0, 3, 5) == v.at(v.dims.x - 1, 3, 5));
}

TEST_CASE("double lateral flip is the identity") {
    const auto v = make_volume();
    AugmentDraw d;
    d.flip = {true, false, false};
    const auto w = augment(augment(v, d), d);
    CHECK(w.voxels == v.voxels);  // integer reindexing, exact
    for (int k = 0; k < kNumLandmarks; ++k) {
        // (D-1) - ((D-1) - x) can round in the last ulp
        CHECK(distance(w.landmarks_gt[k], v.landmarks_gt[k]) <= 1e-12);
    }
}

TEST_CASE("flip/rotate draws preserve pairwise landmark distances") {
    const auto v = make_volume();
    const auto base = pairwise_distances(v.landmarks_gt);
    Rng rng(4);
    for (int trial = 0; trial < 40; ++trial) {
        AugmentDraw d = sample_augment_draw(rng);
        d.scale = 1.0;  // isometries only
        const auto w = augment(v, d);
        const auto got = pairwise_distances(w.landmarks_gt);
        for (size_t i = 0; i < base.size(); ++i) {
            REQUIRE(std::fabs(got[i] - base[i]) <= 1e-9);
        }
        // landmarks stay inside
        for (int k = 0; k < kNumLandmarks; ++k) {
            for (int a = 0; a < 3; ++a) {
                REQUIRE(w.landmarks_gt[k][a] >= 0.0);
                REQUIRE(w.landmarks_gt[k][a] <= w.dims[a] - 1.0);
            }
        }
    }
}

TEST_CASE("rotation consistency of voxel content") {
    const auto v = make_volume();
    AugmentDraw d;
    d.rot_axis = 2;
    d.rot_quarters = 1;
    const auto w = augment(v, d);
    // +90 about z: new (x', y') samples old (x=y', y=Dy-1-x').
    CHECK(w.dims.x == v.dims.y);
    CHECK(w.dims.y == v.dims.x);
    CHECK(w.at(3, 10, 7) == v.at(10, v.dims.y - 1 - 3, 7));
    // four quarter turns are the identity
    d.rot_quarters = 4;
    const auto id = augment(v, d);
    CHECK(id.voxels == v.voxels);
}

TEST_CASE("scaling scales distances and resamples trilinearly") {
    const auto v = make_volume();
    AugmentDraw d;
    d.scale = 1.5;
    const auto w = augment(v, d);
    for (int a = 0; a < 3; ++a) {
        CHECK(w.dims[a] == static_cast<int>(std::ceil(1.5 * (v.dims[a] - 1))) + 1);
    }
    for (int k = 0; k < kNumLandmarks; ++k) {
        CHECK(w.landmarks_gt[k].x == doctest::Approx(1.5 * v.landmarks_gt[k].x).epsilon(1e-12));
    }
    // pairwise distances scale by 1.5 (exact on labels; 0.1 voxel slack per
    // the contract)
    const auto base = pairwise_distances(v.landmarks_gt);
    const auto got = pairwise_distances(w.landmarks_gt);
    for (size_t i = 0; i < base.size(); ++i) {
        REQUIRE(std::fabs(got[i] - 1.5 * base[i]) <= 0.1);
    }
    // voxel value at a lattice point that maps exactly: out 3 -> in 2
    CHECK(w.at(3, 3, 3) == v.at(2, 2, 2));
}

TEST_CASE("seeded augment is deterministic") {
    const auto v = make_volume();
    const auto a = augment(v, uint64_t{99});
    const auto b = augment(v, uint64_t{99});
    CHECK(a.voxels == b.voxels);
    for (int k = 0; k < kNumLandmarks; ++k) CHECK(a.landmarks_gt[k] == b.landmarks_gt[k]);
}
