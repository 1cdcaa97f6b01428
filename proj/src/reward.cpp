#include "fetalpose/reward.hpp"

#include "fetalpose/errors.hpp"

namespace fetalpose {

double point_segment_distance(const Vec3& p, const Vec3& pk, const Vec3& pm) {
    const Vec3 a = pk - pm;
    const double len = norm(a);
    if (len < 1e-9) throw DegenerateSegment("segment endpoints coincide");
    if (dot(p - pk, a) > 0.0) return distance(p, pk);
    if (dot(p - pm, a) < 0.0) return distance(p, pm);
    return norm(cross(p - pm, a)) / len;
}

double agent_reward(int k, const Vec3& pos_t, const Vec3& pos_t1,
                    const std::array<Vec3, kNumLandmarks>& gt, const PoseGraph& graph,
                    const RewardConfig& cfg) {
    const Vec3& target = gt[k];
    double r = distance(pos_t, target) - distance(pos_t1, target);
    if (cfg.use_structure_reward && cfg.beta != 0.0) {
        for (int m : limb_neighbors(graph, k)) {
            r += cfg.beta * (point_segment_distance(pos_t, gt[k], gt[m]) -
                             point_segment_distance(pos_t1, gt[k], gt[m]));
        }
    }
    return r;
}

}  // namespace fetalpose
