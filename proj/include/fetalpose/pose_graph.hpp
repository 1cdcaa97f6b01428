#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace fetalpose {

// The fixed 15-landmark fetal pose graph. Indices are the canonical agent
// order used everywhere (network node slots, reward vectors, file formats).

constexpr int kNumLandmarks = 15;
constexpr int kNumActions = 6;

enum class LandmarkId : int {
    eye_L = 0,
    eye_R = 1,
    shoulder_L = 2,
    shoulder_R = 3,
    elbow_L = 4,
    elbow_R = 5,
    wrist_L = 6,
    wrist_R = 7,
    bladder = 8,
    hip_L = 9,
    hip_R = 10,
    knee_L = 11,
    knee_R = 12,
    ankle_L = 13,
    ankle_R = 14,
};

const std::array<std::string, kNumLandmarks>& landmark_names();
const std::string& landmark_name(LandmarkId id);
LandmarkId landmark_from_name(const std::string& name);  // throws ConfigError
LandmarkId landmark_from_index(int index);                // throws ConfigError

// Index of the laterally mirrored landmark (eye_L <-> eye_R, ...); bladder
// maps to itself.
int lateral_partner(int index);

using EdgeSet = std::set<std::pair<int, int>>;  // pairs stored with first < second

struct PoseGraph {
    EdgeSet skeleton_edges;
    EdgeSet lateral_edges;
    std::set<int> limb_agents;                          // S_l: 12 joints on limbs
    std::array<std::set<int>, kNumLandmarks> limb_segments;  // N(k), empty outside S_l

    bool has_skeleton_edge(int a, int b) const;
    bool has_lateral_edge(int a, int b) const;
    // Neighbors under skeleton ∪ lateral edges.
    std::set<int> neighbors(int k) const;
    // Ordered (a,b) pairs, skeleton first then lateral, each sorted; used for
    // checkpoint serialization.
    std::vector<std::pair<int, int>> ordered_edge_list() const;
};

// Binary support matrix A (symmetric, unit diagonal) paired with the
// trainable mixing matrix M. Row-major 15x15 storage.
struct AdjacencyMask {
    std::array<double, kNumLandmarks * kNumLandmarks> A{};
    std::array<double, kNumLandmarks * kNumLandmarks> M{};

    double a(int i, int j) const { return A[i * kNumLandmarks + j]; }
    double m(int i, int j) const { return M[i * kNumLandmarks + j]; }
};

// The fixed anatomy: arm and leg chains, shoulders/hips/eyes attached to the
// bladder-centered torso, plus left-right correlation edges.
PoseGraph build_fetal_graph();

// Support matrix of `graph` with self-loops, M zero-initialized (uniform
// attention after the softmax).
AdjacencyMask build_adjacency_mask(const PoseGraph& graph);

// rho(M ⊙ A): per row, softmax over the entries where A==1; zeros elsewhere.
// Output rows sum to 1 for all finite M.
std::array<double, kNumLandmarks * kNumLandmarks> normalized_adjacency(const AdjacencyMask& mask);

// Reverse-mode companion of normalized_adjacency: given dL/dP accumulates
// dL/dM. Shared with the graph communication layer's backward pass.
void normalized_adjacency_backward(const std::array<double, kNumLandmarks * kNumLandmarks>& P,
                                   const std::array<double, kNumLandmarks * kNumLandmarks>& dP,
                                   const AdjacencyMask& mask,
                                   std::array<double, kNumLandmarks * kNumLandmarks>& dM);

// N(k) for limb agents, empty set otherwise.
const std::set<int>& limb_neighbors(const PoseGraph& graph, int k);

}  // namespace fetalpose
