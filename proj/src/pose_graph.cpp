#include "fetalpose/pose_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fetalpose/errors.hpp"

namespace fetalpose {

const std::array<std::string, kNumLandmarks>& landmark_names() {
    static const std::array<std::string, kNumLandmarks> names = {
        "eye_L",      "eye_R",      "shoulder_L", "shoulder_R", "elbow_L",
        "elbow_R",    "wrist_L",    "wrist_R",    "bladder",    "hip_L",
        "hip_R",      "knee_L",     "knee_R",     "ankle_L",    "ankle_R",
    };
    return names;
}

const std::string& landmark_name(LandmarkId id) {
    return landmark_names()[static_cast<int>(id)];
}

LandmarkId landmark_from_name(const std::string& name) {
    const auto& names = landmark_names();
    for (int i = 0; i < kNumLandmarks; ++i) {
        if (names[i] == name) return static_cast<LandmarkId>(i);
    }
    throw ConfigError("unknown landmark name: " + name);
}

LandmarkId landmark_from_index(int index) {
    if (index < 0 || index >= kNumLandmarks) {
        throw ConfigError("landmark index out of range: " + std::to_string(index));
    }
    return static_cast<LandmarkId>(index);
}

int lateral_partner(int index) {
    const int bladder = static_cast<int>(LandmarkId::bladder);
    if (index == bladder) return index;
    // L/R pairs are adjacent in the canonical order with L first; bladder at
    // index 8 shifts the parity of the pairs after it.
    const int base = index < bladder ? index : index - 9;
    return (base % 2 == 0) ? index + 1 : index - 1;
}

namespace {

std::pair<int, int> ordered(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

}  // namespace

bool PoseGraph::has_skeleton_edge(int a, int b) const {
    return skeleton_edges.count(ordered(a, b)) > 0;
}

bool PoseGraph::has_lateral_edge(int a, int b) const {
    return lateral_edges.count(ordered(a, b)) > 0;
}

std::set<int> PoseGraph::neighbors(int k) const {
    std::set<int> out;
    for (const auto& [a, b] : skeleton_edges) {
        if (a == k) out.insert(b);
        if (b == k) out.insert(a);
    }
    for (const auto& [a, b] : lateral_edges) {
        if (a == k) out.insert(b);
        if (b == k) out.insert(a);
    }
    return out;
}

std::vector<std::pair<int, int>> PoseGraph::ordered_edge_list() const {
    std::vector<std::pair<int, int>> out(skeleton_edges.begin(), skeleton_edges.end());
    out.insert(out.end(), lateral_edges.begin(), lateral_edges.end());
    return out;
}

PoseGraph build_fetal_graph() {
    using L = LandmarkId;
    PoseGraph g;
    auto add_skel = [&](L a, L b) {
        g.skeleton_edges.insert(ordered(static_cast<int>(a), static_cast<int>(b)));
    };

    // Arm and leg chains.
    add_skel(L::shoulder_L, L::elbow_L);
    add_skel(L::shoulder_R, L::elbow_R);
    add_skel(L::elbow_L, L::wrist_L);
    add_skel(L::elbow_R, L::wrist_R);
    add_skel(L::hip_L, L::knee_L);
    add_skel(L::hip_R, L::knee_R);
    add_skel(L::knee_L, L::ankle_L);
    add_skel(L::knee_R, L::ankle_R);
    // Torso hub: bladder links shoulders, hips and eyes.
    add_skel(L::shoulder_L, L::bladder);
    add_skel(L::shoulder_R, L::bladder);
    add_skel(L::hip_L, L::bladder);
    add_skel(L::hip_R, L::bladder);
    add_skel(L::eye_L, L::bladder);
    add_skel(L::eye_R, L::bladder);

    // Left-right correlation edges, one per mirrored pair.
    for (int i = 0; i < kNumLandmarks; ++i) {
        int j = lateral_partner(i);
        if (j != i) g.lateral_edges.insert(ordered(i, j));
    }

    // S_l: shoulders, elbows, wrists, hips, knees and ankles.
    for (L id : {L::shoulder_L, L::shoulder_R, L::elbow_L, L::elbow_R, L::wrist_L, L::wrist_R,
                 L::hip_L, L::hip_R, L::knee_L, L::knee_R, L::ankle_L, L::ankle_R}) {
        g.limb_agents.insert(static_cast<int>(id));
    }

    // N(k): skeleton neighbors restricted to S_l, so chains stay on limbs
    // (shoulder-bladder rods are torso frame, not limb segments).
    for (int k : g.limb_agents) {
        for (const auto& [a, b] : g.skeleton_edges) {
            int other = -1;
            if (a == k) other = b;
            if (b == k) other = a;
            if (other >= 0 && g.limb_agents.count(other)) g.limb_segments[k].insert(other);
        }
    }
    return g;
}

AdjacencyMask build_adjacency_mask(const PoseGraph& graph) {
    AdjacencyMask mask;
    for (int i = 0; i < kNumLandmarks; ++i) mask.A[i * kNumLandmarks + i] = 1.0;
    auto set_edge = [&](int a, int b) {
        mask.A[a * kNumLandmarks + b] = 1.0;
        mask.A[b * kNumLandmarks + a] = 1.0;
    };
    for (const auto& [a, b] : graph.skeleton_edges) set_edge(a, b);
    for (const auto& [a, b] : graph.lateral_edges) set_edge(a, b);
    return mask;
}

std::array<double, kNumLandmarks * kNumLandmarks> normalized_adjacency(const AdjacencyMask& mask) {
    constexpr int K = kNumLandmarks;
    std::array<double, K * K> P{};
    for (int i = 0; i < K; ++i) {
        double rowmax = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < K; ++j) {
            if (mask.A[i * K + j] != 0.0) rowmax = std::max(rowmax, mask.M[i * K + j]);
        }
        double sum = 0.0;
        for (int j = 0; j < K; ++j) {
            if (mask.A[i * K + j] != 0.0) {
                double e = std::exp(mask.M[i * K + j] - rowmax);
                P[i * K + j] = e;
                sum += e;
            }
        }
        for (int j = 0; j < K; ++j) P[i * K + j] /= sum;
    }
    return P;
}

void normalized_adjacency_backward(const std::array<double, kNumLandmarks * kNumLandmarks>& P,
                                   const std::array<double, kNumLandmarks * kNumLandmarks>& dP,
                                   const AdjacencyMask& mask,
                                   std::array<double, kNumLandmarks * kNumLandmarks>& dM) {
    constexpr int K = kNumLandmarks;
    for (int i = 0; i < K; ++i) {
        double inner = 0.0;  // sum_j dP[i][j] * P[i][j]
        for (int j = 0; j < K; ++j) inner += dP[i * K + j] * P[i * K + j];
        for (int j = 0; j < K; ++j) {
            if (mask.A[i * K + j] != 0.0) {
                dM[i * K + j] += P[i * K + j] * (dP[i * K + j] - inner);
            }
        }
    }
}

const std::set<int>& limb_neighbors(const PoseGraph& graph, int k) {
    static const std::set<int> empty;
    if (k < 0 || k >= kNumLandmarks) return empty;
    return graph.limb_segments[k];
}

}  // namespace fetalpose
