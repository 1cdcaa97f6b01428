#pragma once

#include <array>

#include "fetalpose/pose_graph.hpp"
#include "fetalpose/vec3.hpp"

namespace fetalpose {

struct RewardConfig {
    double beta = 2.0;
    bool use_structure_reward = true;
};

// Distance from p to the segment [pk, pm], computed with the three-case rule
// anchored at a = pk - pm: beyond the k end -> |p - pk|, beyond the m end ->
// |p - pm|, otherwise perpendicular distance to the supporting line. Ties on
// the case boundaries fall through to the perpendicular formula, which agrees
// with the endpoint value there. Throws DegenerateSegment when |pk - pm| < 1e-9.
double point_segment_distance(const Vec3& p, const Vec3& pk, const Vec3& pm);

// Immediate reward for agent k moving pos_t -> pos_t1: the delta of distance
// to its target landmark, plus beta-weighted deltas of distance to each limb
// segment (gt_k, gt_m) for m in N(k). Agents outside S_l get the pure
// distance-delta reward. All distances in voxel units.
double agent_reward(int k, const Vec3& pos_t, const Vec3& pos_t1,
                    const std::array<Vec3, kNumLandmarks>& gt, const PoseGraph& graph,
                    const RewardConfig& cfg);

}  // namespace fetalpose
