#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fetalpose/eval/evaluate.hpp"
#include "fetalpose/phantom.hpp"
#include "testutil.hpp"

using namespace fetalpose;
namespace fs = std::filesystem;

namespace {

LabeledVolume flat_volume(IVec3 dims) {
    LabeledVolume v;
    v.dims = dims;
    v.spacing_mm = {3.0, 3.0, 3.0};
    v.voxels.assign(v.voxel_count(), 0.0f);
    for (int k = 0; k < kNumLandmarks; ++k) {
        v.landmarks_gt[k] = {double(5 + k % 3), double(5 + k % 5), double(5 + k % 7)};
    }
    return v;
}

// Always proposes the same action for every agent.
struct ConstantPolicy : nn::QFunction {
    int action;
    int patch = 8;
    explicit ConstantPolicy(int a) : action(a) {}
    int patch_size() const override { return patch; }
    void q_values(const std::vector<float>&,
                  std::array<float, kNumLandmarks * kNumActions>& q) override {
        q.fill(0.0f);
        for (int k = 0; k < kNumLandmarks; ++k) q[k * kNumActions + action] = 1.0f;
    }
};

// Alternates +x / -x per call: every agent falls into a 2-cycle immediately.
struct OscillatingPolicy : nn::QFunction {
    int calls = 0;
    int patch_size() const override { return 8; }
    void q_values(const std::vector<float>&,
                  std::array<float, kNumLandmarks * kNumActions>& q) override {
        q.fill(0.0f);
        const int a = (calls++ % 2 == 0) ? 0 : 1;  // +x then -x
        for (int k = 0; k < kNumLandmarks; ++k) q[k * kNumActions + a] = 1.0f;
    }
};

}  // namespace

TEST_CASE("run_inference with a straight-ray stub clamps at the boundary and stops") {
    const auto v = flat_volume({20, 20, 20});
    ConstantPolicy qf(0);  // +x forever
    Rng rng(1);
    const auto res = run_inference(v, qf, 100, rng);

    for (int k = 0; k < kNumLandmarks; ++k) {
        const auto& trace = res.trace.positions[k];
        // x is nondecreasing, y/z constant: a straight clamped ray.
        for (size_t t = 1; t < trace.size(); ++t) {
            REQUIRE(trace[t].y == trace[0].y);
            REQUIRE(trace[t].z == trace[0].z);
            REQUIRE(trace[t].x >= trace[t - 1].x);
            REQUIRE(trace[t].x - trace[t - 1].x <= 1);
        }
        // Once the wall stalls the agent, the repeat rule stops it there.
        CHECK(res.final_positions[k].x == v.dims.x - 1);
        CHECK(trace.size() <= 101);
    }
}

TEST_CASE("run_inference oscillation stop reports the rounded midpoint") {
    const auto v = flat_volume({20, 20, 20});
    OscillatingPolicy qf;
    Rng rng(2);
    const auto res = run_inference(v, qf, 100, rng);
    for (int k = 0; k < kNumLandmarks; ++k) {
        // h0 -> h0+1 -> h0: stop at t=2, midpoint x+0.5 rounds away from zero.
        REQUIRE(res.trace.positions[k].size() == 3);
        const int x0 = res.trace.positions[k][0].x;
        CHECK(res.final_positions[k].x == x0 + 1);
        CHECK(res.final_positions[k].y == res.trace.positions[k][0].y);
    }
}

TEST_CASE("run_inference is deterministic per seed and respects step bounds") {
    PhantomSpec spec;
    spec.dims = {24, 24, 24};
    spec.figure_scale = 0.42;
    spec.head_radius = 2.2;
    spec.torso_radii = {3.4, 2.3, 3.8};
    spec.limb_radius = 1.2;
    spec.translation_range = 0.6;
    const auto v = generate_phantom(spec, 77);

    nn::QNetwork<float> net(nn::NetConfig::tiny());
    net.init(5);
    Rng r1(9), r2(9);
    const auto a = run_inference(v, net, 40, r1);
    const auto b = run_inference(v, net, 40, r2);
    for (int k = 0; k < kNumLandmarks; ++k) {
        CHECK(a.final_positions[k] == b.final_positions[k]);
        REQUIRE(a.trace.positions[k] == b.trace.positions[k]);
        for (size_t t = 1; t < a.trace.positions[k].size(); ++t) {
            const auto& p = a.trace.positions[k][t - 1];
            const auto& q = a.trace.positions[k][t];
            REQUIRE(std::abs(p.x - q.x) + std::abs(p.y - q.y) + std::abs(p.z - q.z) <= 1);
        }
    }
}

TEST_CASE("pck and mean error arithmetic") {
    const Vec3 spacing{3.0, 3.0, 3.0};
    std::array<Vec3, kNumLandmarks> gt{};
    for (int k = 0; k < kNumLandmarks; ++k) gt[k] = {10, 10, 10};

    SUBCASE("exact predictions give 100% / 0 mm") {
        MetricAccumulator acc;
        std::array<IVec3, kNumLandmarks> pred{};
        for (auto& p : pred) p = {10, 10, 10};
        acc.add(pred, gt, spacing, 10.0);
        CHECK(aggregate_pck(acc) == 100.0);
        CHECK(aggregate_mean_error(acc) == 0.0);
        for (int k = 0; k < kNumLandmarks; ++k) {
            CHECK(pck(acc)[k] == 100.0);
            CHECK(mean_error(acc)[k] == 0.0);
        }
    }

    SUBCASE("2 of 4 within threshold gives 50%") {
        MetricAccumulator acc;
        for (int i = 0; i < 4; ++i) {
            std::array<IVec3, kNumLandmarks> pred{};
            for (auto& p : pred) p = (i < 2) ? IVec3{10, 10, 10} : IVec3{10, 10, 20};
            acc.add(pred, gt, spacing, 10.0);
        }
        CHECK(aggregate_pck(acc) == 50.0);
        CHECK(pck(acc)[0] == 50.0);
    }

    SUBCASE("one voxel off at 3 mm spacing is 3 mm; boundary distance counts") {
        MetricAccumulator acc;
        std::array<IVec3, kNumLandmarks> pred{};
        for (auto& p : pred) p = {11, 10, 10};
        acc.add(pred, gt, spacing, 3.0);  // exactly at threshold -> counted
        CHECK(mean_error(acc)[0] == doctest::Approx(3.0));
        CHECK(pck(acc)[0] == 100.0);
        MetricAccumulator tight;
        tight.add(pred, gt, spacing, 2.999);
        CHECK(pck(tight)[0] == 0.0);
    }

    SUBCASE("pck is monotone in the threshold") {
        Rng rng(3);
        std::array<IVec3, kNumLandmarks> pred{};
        for (auto& p : pred) {
            p = {rng.uniform_int(0, 20), rng.uniform_int(0, 20), rng.uniform_int(0, 20)};
        }
        double prev = 0.0;
        for (double thr : {0.0, 2.0, 5.0, 10.0, 30.0, 100.0}) {
            MetricAccumulator acc;
            acc.add(pred, gt, spacing, thr);
            CHECK(aggregate_pck(acc) >= prev);
            prev = aggregate_pck(acc);
        }
    }

    SUBCASE("mean error is translation invariant; symmetric under pred/gt swap") {
        Rng rng(4);
        std::array<IVec3, kNumLandmarks> pred{};
        auto gt2 = gt;
        for (int k = 0; k < kNumLandmarks; ++k) {
            pred[k] = {rng.uniform_int(0, 20), rng.uniform_int(0, 20), rng.uniform_int(0, 20)};
            gt2[k] = {rng.uniform_real(0, 20), rng.uniform_real(0, 20), rng.uniform_real(0, 20)};
        }
        MetricAccumulator a, b;
        a.add(pred, gt2, spacing, 10.0);
        std::array<IVec3, kNumLandmarks> pred_shift{};
        auto gt_shift = gt2;
        for (int k = 0; k < kNumLandmarks; ++k) {
            pred_shift[k] = {pred[k].x + 3, pred[k].y + 3, pred[k].z + 3};
            gt_shift[k] = gt2[k] + Vec3{3, 3, 3};
        }
        b.add(pred_shift, gt_shift, spacing, 10.0);
        for (int k = 0; k < kNumLandmarks; ++k) {
            CHECK(mean_error(a)[k] == doctest::Approx(mean_error(b)[k]).epsilon(1e-9));
        }
        // swap: distance is symmetric (use integer gt so it can be a pred)
        std::array<IVec3, kNumLandmarks> gt_as_pred{};
        std::array<Vec3, kNumLandmarks> pred_as_gt{};
        for (int k = 0; k < kNumLandmarks; ++k) {
            gt_as_pred[k] = {int(gt[k].x), int(gt[k].y), int(gt[k].z)};
            pred_as_gt[k] = pred[k].to_vec3();
        }
        MetricAccumulator c, d;
        c.add(pred, gt, spacing, 10.0);
        d.add(gt_as_pred, pred_as_gt, spacing, 10.0);
        for (int k = 0; k < kNumLandmarks; ++k) {
            CHECK(mean_error(c)[k] == doctest::Approx(mean_error(d)[k]).epsilon(1e-12));
        }
    }

    SUBCASE("brute-force recomputation matches exactly on random sets") {
        Rng rng(6);
        for (int trial = 0; trial < 100; ++trial) {
            MetricAccumulator acc;
            const int n = 1 + static_cast<int>(rng.uniform_index(5));
            std::vector<std::array<IVec3, kNumLandmarks>> preds(n);
            std::vector<std::array<Vec3, kNumLandmarks>> gts(n);
            const Vec3 sp{rng.uniform_real(0.5, 4), rng.uniform_real(0.5, 4),
                          rng.uniform_real(0.5, 4)};
            const double thr = rng.uniform_real(1, 15);
            for (int i = 0; i < n; ++i) {
                for (int k = 0; k < kNumLandmarks; ++k) {
                    preds[i][k] = {rng.uniform_int(0, 30), rng.uniform_int(0, 30),
                                   rng.uniform_int(0, 30)};
                    gts[i][k] = {rng.uniform_real(0, 30), rng.uniform_real(0, 30),
                                 rng.uniform_real(0, 30)};
                }
                acc.add(preds[i], gts[i], sp, thr);
            }
            // ten-line recomputation
            int hits = 0;
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                for (int k = 0; k < kNumLandmarks; ++k) {
                    const double dx = (preds[i][k].x - gts[i][k].x) * sp.x;
                    const double dy = (preds[i][k].y - gts[i][k].y) * sp.y;
                    const double dz = (preds[i][k].z - gts[i][k].z) * sp.z;
                    const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
                    total += dist;
                    if (dist <= thr) ++hits;
                }
            }
            REQUIRE(aggregate_pck(acc) == 100.0 * hits / (n * kNumLandmarks));
            REQUIRE(aggregate_mean_error(acc) == doctest::Approx(total / (n * kNumLandmarks))
                                                     .epsilon(1e-12));
        }
    }
}

TEST_CASE("evaluate_dataset aggregates repeats") {
    std::vector<std::shared_ptr<const LabeledVolume>> volumes;
    for (int i = 0; i < 3; ++i) {
        volumes.push_back(std::make_shared<const LabeledVolume>(flat_volume({20, 20, 20})));
    }
    ConstantPolicy qf(0);

    const auto r1 = evaluate_dataset(volumes, qf, 1, 42, 10.0, 30);
    const auto r3 = evaluate_dataset(volumes, qf, 3, 42, 10.0, 30);
    CHECK(r1.n_repeats == 1);
    CHECK(r3.n_repeats == 3);
    CHECK(r1.n_volumes == 3);
    // repeat 0 of the 3-repeat run uses the same seeds as the single pass
    CHECK(r1.aggregate_pck >= 0.0);
    CHECK(r3.aggregate_pck_sd >= 0.0);
    // macro aggregate is the landmark average
    double macro = 0.0;
    for (int k = 0; k < kNumLandmarks; ++k) macro += r3.pck_per_landmark[k] / kNumLandmarks;
    CHECK(r3.macro_pck == doctest::Approx(macro).epsilon(1e-12));
}

TEST_CASE("report and csv contain all 15 landmark rows plus aggregates") {
    EvalResult r;
    r.n_volumes = 2;
    r.n_repeats = 3;
    for (int k = 0; k < kNumLandmarks; ++k) {
        r.pck_per_landmark[k] = 50.0 + k;
        r.mean_mm_per_landmark[k] = k;
    }
    r.aggregate_pck = 57.0;
    r.aggregate_mean_mm = 7.0;
    const auto report = format_report(r);
    const auto csv = format_csv(r);
    for (const auto& name : landmark_names()) {
        CHECK(report.find(name) != std::string::npos);
        CHECK(csv.find(name) != std::string::npos);
    }
    CHECK(report.find("all") != std::string::npos);
    CHECK(csv.find("all,") != std::string::npos);
    CHECK(csv.find("all_macro") != std::string::npos);
}

TEST_CASE("write_trace emits one file per agent plus the 2-D projection") {
    const auto dir = testutil::scratch_dir("trace");
    PathTrace trace;
    for (int k = 0; k < kNumLandmarks; ++k) {
        trace.positions[k] = {{1, 2, 3}, {2, 2, 3}, {2, 3, 3}};
    }
    write_trace(trace, dir);
    for (const auto& name : landmark_names()) {
        CHECK(fs::exists(fs::path(dir) / ("trace_" + name + ".txt")));
    }
    CHECK(fs::exists(fs::path(dir) / "trace_2d.csv"));
    fs::remove_all(dir);
}
