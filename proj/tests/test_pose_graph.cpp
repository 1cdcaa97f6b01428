#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <queue>

#include "fetalpose/pose_graph.hpp"
#include "fetalpose/rng.hpp"

using namespace fetalpose;

namespace {

int idx(LandmarkId id) { return static_cast<int>(id); }

AdjacencyMask random_mask(uint64_t seed) {
    auto mask = build_adjacency_mask(build_fetal_graph());
    Rng rng(seed);
    for (auto& m : mask.M) m = rng.uniform_real(-3.0, 3.0);
    return mask;
}

}  // namespace

TEST_CASE("landmark naming is a bijection") {
    for (int i = 0; i < kNumLandmarks; ++i) {
        CHECK(idx(landmark_from_name(landmark_names()[i])) == i);
    }
    CHECK_THROWS(landmark_from_name("spleen"));
    CHECK_THROWS(landmark_from_index(15));
}

TEST_CASE("fetal graph structure") {
    const auto g = build_fetal_graph();

    SUBCASE("edge types are disjoint") {
        for (const auto& e : g.skeleton_edges) CHECK(g.lateral_edges.count(e) == 0);
    }
    SUBCASE("limb agents are the 12 joint landmarks") {
        CHECK(g.limb_agents.size() == 12);
        CHECK(g.limb_agents.count(idx(LandmarkId::bladder)) == 0);
        CHECK(g.limb_agents.count(idx(LandmarkId::eye_L)) == 0);
        CHECK(g.limb_agents.count(idx(LandmarkId::eye_R)) == 0);
    }
    SUBCASE("limb chain neighborhoods") {
        CHECK(g.limb_segments[idx(LandmarkId::wrist_L)] ==
              std::set<int>{idx(LandmarkId::elbow_L)});
        CHECK(g.limb_segments[idx(LandmarkId::elbow_L)] ==
              std::set<int>{idx(LandmarkId::shoulder_L), idx(LandmarkId::wrist_L)});
        CHECK(limb_neighbors(g, idx(LandmarkId::ankle_R)) ==
              std::set<int>{idx(LandmarkId::knee_R)});
        CHECK(limb_neighbors(g, idx(LandmarkId::bladder)).empty());
        const auto& sh = limb_neighbors(g, idx(LandmarkId::shoulder_L));
        CHECK(!sh.empty());
        CHECK(sh.count(idx(LandmarkId::elbow_L)) == 1);
        for (int k : g.limb_agents) CHECK(!g.limb_segments[k].empty());
    }
    SUBCASE("eyes pair laterally, not through the skeleton") {
        CHECK(g.has_lateral_edge(idx(LandmarkId::eye_L), idx(LandmarkId::eye_R)));
        CHECK(!g.has_skeleton_edge(idx(LandmarkId::eye_L), idx(LandmarkId::eye_R)));
        CHECK(g.has_lateral_edge(idx(LandmarkId::knee_L), idx(LandmarkId::knee_R)));
    }
    SUBCASE("graph is connected under both edge types") {
        std::queue<int> q;
        std::set<int> seen{0};
        q.push(0);
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int v : g.neighbors(u)) {
                if (seen.insert(v).second) q.push(v);
            }
        }
        CHECK(seen.size() == kNumLandmarks);
    }
}

TEST_CASE("adjacency mask support") {
    const auto g = build_fetal_graph();
    const auto mask = build_adjacency_mask(g);
    for (int i = 0; i < kNumLandmarks; ++i) {
        CHECK(mask.a(i, i) == 1.0);
        for (int j = 0; j < kNumLandmarks; ++j) {
            CHECK(mask.a(i, j) == mask.a(j, i));
            if (i != j) {
                const bool edge = g.has_skeleton_edge(i, j) || g.has_lateral_edge(i, j);
                CHECK(mask.a(i, j) == (edge ? 1.0 : 0.0));
            }
        }
    }
}

TEST_CASE("normalized adjacency softmax") {
    SUBCASE("two equal allowed entries split 0.5/0.5, singleton row is 1") {
        AdjacencyMask mask{};
        for (int i = 0; i < kNumLandmarks; ++i) mask.A[i * kNumLandmarks + i] = 1.0;
        mask.A[0 * kNumLandmarks + 1] = 1.0;
        mask.A[1 * kNumLandmarks + 0] = 1.0;
        mask.M[0 * kNumLandmarks + 0] = 0.7;
        mask.M[0 * kNumLandmarks + 1] = 0.7;
        const auto P = normalized_adjacency(mask);
        CHECK(P[0 * kNumLandmarks + 0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(P[0 * kNumLandmarks + 1] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(P[2 * kNumLandmarks + 2] == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("rows are stochastic and support is preserved, 1000 random M") {
        for (uint64_t s = 0; s < 1000; ++s) {
            const auto mask = random_mask(s);
            const auto P = normalized_adjacency(mask);
            for (int i = 0; i < kNumLandmarks; ++i) {
                double row = 0.0;
                for (int j = 0; j < kNumLandmarks; ++j) {
                    const double p = P[i * kNumLandmarks + j];
                    REQUIRE(p >= 0.0);
                    row += p;
                    REQUIRE((p == 0.0) == (mask.a(i, j) == 0.0));
                }
                REQUIRE(std::fabs(row - 1.0) <= 1e-12);
            }
        }
    }

    SUBCASE("softmax shift invariance per row") {
        auto mask = random_mask(99);
        const auto P0 = normalized_adjacency(mask);
        for (int j = 0; j < kNumLandmarks; ++j) mask.M[4 * kNumLandmarks + j] += 17.25;
        const auto P1 = normalized_adjacency(mask);
        for (int i = 0; i < kNumLandmarks * kNumLandmarks; ++i) {
            CHECK(std::fabs(P0[i] - P1[i]) <= 1e-12);
        }
    }

    SUBCASE("gradient w.r.t. M matches central differences") {
        auto mask = random_mask(7);
        // Scalar probe f = sum_ij C_ij P_ij with fixed random C.
        Rng rng(11);
        std::array<double, kNumLandmarks * kNumLandmarks> C{};
        for (auto& c : C) c = rng.uniform_real(-1.0, 1.0);

        const auto P = normalized_adjacency(mask);
        std::array<double, kNumLandmarks * kNumLandmarks> dM{};
        normalized_adjacency_backward(P, C, mask, dM);

        const double h = 1e-5;
        for (int i = 0; i < kNumLandmarks; ++i) {
            for (int j = 0; j < kNumLandmarks; ++j) {
                if (mask.a(i, j) == 0.0) {
                    CHECK(dM[i * kNumLandmarks + j] == 0.0);
                    continue;
                }
                auto eval = [&](double delta) {
                    auto m2 = mask;
                    m2.M[i * kNumLandmarks + j] += delta;
                    const auto P2 = normalized_adjacency(m2);
                    double f = 0.0;
                    for (int t = 0; t < kNumLandmarks * kNumLandmarks; ++t) f += C[t] * P2[t];
                    return f;
                };
                const double fd = (eval(h) - eval(-h)) / (2.0 * h);
                const double an = dM[i * kNumLandmarks + j];
                const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
                CHECK(std::fabs(fd - an) / denom < 1e-4);
            }
        }
    }
}
