#include "fetalpose/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "fetalpose/errors.hpp"
#include "fetalpose/reward.hpp"

namespace fetalpose {

namespace {

using L = LandmarkId;

int idx(L id) { return static_cast<int>(id); }

// Canonical body-frame joint positions at figure_scale = 1 (voxels, origin at
// mid-torso). Arms reach outward-down, legs downward; extremities sit near
// the figure's bounding radius.
std::array<Vec3, kNumLandmarks> template_joints() {
    std::array<Vec3, kNumLandmarks> p{};
    p[idx(L::bladder)] = {0.0, 0.0, -3.0};
    p[idx(L::shoulder_L)] = {-5.5, 0.0, 6.0};
    p[idx(L::shoulder_R)] = {5.5, 0.0, 6.0};
    p[idx(L::elbow_L)] = {-10.5, 1.5, 0.5};
    p[idx(L::elbow_R)] = {10.5, 1.5, 0.5};
    p[idx(L::wrist_L)] = {-15.0, 3.0, -4.0};
    p[idx(L::wrist_R)] = {15.0, 3.0, -4.0};
    p[idx(L::hip_L)] = {-3.5, 0.0, -7.0};
    p[idx(L::hip_R)] = {3.5, 0.0, -7.0};
    p[idx(L::knee_L)] = {-6.0, 1.0, -12.5};
    p[idx(L::knee_R)] = {6.0, 1.0, -12.5};
    p[idx(L::ankle_L)] = {-7.5, 2.0, -17.5};
    p[idx(L::ankle_R)] = {7.5, 2.0, -17.5};
    p[idx(L::eye_L)] = {-2.2, -2.0, 13.0};
    p[idx(L::eye_R)] = {2.2, -2.0, 13.0};
    return p;
}

Vec3 head_center_template() { return {0.0, -0.5, 12.5}; }

// Parent joint of each limb bone, proximal to distal.
const std::array<std::pair<L, L>, 8> kLimbBones = {{
    {L::shoulder_L, L::elbow_L},
    {L::shoulder_R, L::elbow_R},
    {L::elbow_L, L::wrist_L},
    {L::elbow_R, L::wrist_R},
    {L::hip_L, L::knee_L},
    {L::hip_R, L::knee_R},
    {L::knee_L, L::ankle_L},
    {L::knee_R, L::ankle_R},
}};

// Capsule-rendered skeleton segments: limb chains plus the torso frame rods.
const std::array<std::pair<L, L>, 12> kCapsuleEdges = {{
    {L::shoulder_L, L::elbow_L},
    {L::shoulder_R, L::elbow_R},
    {L::elbow_L, L::wrist_L},
    {L::elbow_R, L::wrist_R},
    {L::hip_L, L::knee_L},
    {L::hip_R, L::knee_R},
    {L::knee_L, L::ankle_L},
    {L::knee_R, L::ankle_R},
    {L::shoulder_L, L::bladder},
    {L::shoulder_R, L::bladder},
    {L::hip_L, L::bladder},
    {L::hip_R, L::bladder},
}};

struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Vec3 apply(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 transposed() const {
        Mat3 t;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) t.m[i * 3 + j] = m[j * 3 + i];
        return t;
    }
};

// Rodrigues rotation about `axis` (unit) by `angle`.
Mat3 axis_angle(const Vec3& axis, double angle) {
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    const double x = axis.x, y = axis.y, z = axis.z;
    Mat3 r;
    r.m = {t * x * x + c,     t * x * y - s * z, t * x * z + s * y,
           t * x * y + s * z, t * y * y + c,     t * y * z - s * x,
           t * x * z - s * y, t * y * z + s * x, t * z * z + c};
    return r;
}

Vec3 random_unit(Rng& rng) {
    // Marsaglia rejection on the unit ball surface.
    for (;;) {
        Vec3 v{rng.uniform_real(-1.0, 1.0), rng.uniform_real(-1.0, 1.0),
               rng.uniform_real(-1.0, 1.0)};
        double n = norm(v);
        if (n > 1e-6 && n <= 1.0) return v / n;
    }
}

struct Pose {
    std::array<Vec3, kNumLandmarks> joints;  // volume coordinates
    Vec3 head_center;
    Vec3 torso_center;
    Mat3 body_to_volume;  // rotation only
};

// Sample one pose: tilt limb bones, rotate and translate the whole figure.
Pose sample_pose(const PhantomSpec& spec, Rng& rng, const Vec3& volume_center) {
    auto joints = template_joints();
    const double s = spec.figure_scale;
    for (auto& p : joints) p = p * s;
    Vec3 head_c = head_center_template() * s;

    // Re-pose limbs: rotate each bone about its proximal joint, propagating
    // down the chain so bone lengths are preserved.
    for (const auto& [prox, dist] : kLimbBones) {
        const Vec3 bone = joints[idx(dist)] - joints[idx(prox)];
        const Mat3 r = axis_angle(random_unit(rng), rng.uniform_real(0.0, spec.joint_angle_range));
        const Vec3 moved = joints[idx(prox)] + r.apply(bone);
        const Vec3 delta = moved - joints[idx(dist)];
        joints[idx(dist)] += delta;
        // Children further down the chain follow rigidly.
        for (const auto& [p2, d2] : kLimbBones) {
            if (p2 == dist) joints[idx(d2)] += delta;
        }
    }

    const Mat3 rot =
        axis_angle(random_unit(rng), rng.uniform_real(0.0, spec.global_rotation_range));
    Vec3 shift{rng.uniform_real(-spec.translation_range, spec.translation_range),
               rng.uniform_real(-spec.translation_range, spec.translation_range),
               rng.uniform_real(-spec.translation_range, spec.translation_range)};

    Pose pose;
    pose.body_to_volume = rot;
    for (int k = 0; k < kNumLandmarks; ++k) {
        pose.joints[k] = volume_center + rot.apply(joints[k]) + shift;
    }
    pose.head_center = volume_center + rot.apply(head_c) + shift;
    Vec3 torso_c = (joints[idx(L::shoulder_L)] + joints[idx(L::shoulder_R)] +
                    joints[idx(L::hip_L)] + joints[idx(L::hip_R)]) /
                   4.0;
    pose.torso_center = volume_center + rot.apply(torso_c) + shift;
    return pose;
}

// Necessity check: the untilted, unrotated, centered template must fit the
// volume. Rotated/tilted poses that exit the volume are handled by rejection
// sampling instead.
bool template_fits(const PhantomSpec& spec) {
    Vec3 lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
    auto grow = [&](const Vec3& p, double radius) {
        for (int axis = 0; axis < 3; ++axis) {
            lo[axis] = std::min(lo[axis], p[axis] * spec.figure_scale - radius);
            hi[axis] = std::max(hi[axis], p[axis] * spec.figure_scale + radius);
        }
    };
    for (const auto& p : template_joints()) grow(p, spec.limb_radius + 1.0);
    grow(head_center_template(), spec.head_radius + 1.0);
    for (int axis = 0; axis < 3; ++axis) {
        if (hi[axis] - lo[axis] > spec.dims[axis] - 1) return false;
    }
    return true;
}

bool pose_fits(const Pose& pose, const PhantomSpec& spec) {
    const double margin = spec.limb_radius + 1.0;
    for (int k = 0; k < kNumLandmarks; ++k) {
        for (int axis = 0; axis < 3; ++axis) {
            if (pose.joints[k][axis] < margin ||
                pose.joints[k][axis] > spec.dims[axis] - 1 - margin) {
                return false;
            }
        }
    }
    const double head_margin = spec.head_radius + 1.0;
    for (int axis = 0; axis < 3; ++axis) {
        if (pose.head_center[axis] < head_margin ||
            pose.head_center[axis] > spec.dims[axis] - 1 - head_margin) {
            return false;
        }
    }
    return true;
}

}  // namespace

LabeledVolume generate_phantom(const PhantomSpec& spec, uint64_t seed) {
    if (spec.limb_radius < 1.0) throw SpecInfeasible("limb_radius must be >= 1 voxel");
    if (!template_fits(spec)) {
        throw SpecInfeasible("phantom template does not fit the requested dims");
    }

    Rng rng(seed);
    const Vec3 center{(spec.dims.x - 1) / 2.0, (spec.dims.y - 1) / 2.0, (spec.dims.z - 1) / 2.0};

    Pose pose;
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        pose = sample_pose(spec, rng, center);
        ok = pose_fits(pose, spec);
    }
    if (!ok) throw SpecInfeasible("no feasible pose after 100 attempts");

    LabeledVolume v;
    v.dims = spec.dims;
    v.spacing_mm = spec.spacing_mm;
    v.landmarks_gt = pose.joints;
    v.voxels.assign(v.voxel_count(), static_cast<float>(spec.background_level));

    const Mat3 vol_to_body = pose.body_to_volume.transposed();
    const Vec3 torso_radii = spec.torso_radii * spec.figure_scale;
    const double head_r2 = spec.head_radius * spec.head_radius;
    const double limb_r = spec.limb_radius;
    const double eye_r2 = spec.eye_radius * spec.eye_radius;

    std::vector<std::pair<Vec3, Vec3>> capsules;
    for (const auto& [a, b] : kCapsuleEdges) {
        capsules.emplace_back(pose.joints[idx(a)], pose.joints[idx(b)]);
    }
    const Vec3 eyes[2] = {pose.joints[idx(L::eye_L)], pose.joints[idx(L::eye_R)]};

    for (int z = 0; z < v.dims.z; ++z) {
        for (int y = 0; y < v.dims.y; ++y) {
            for (int x = 0; x < v.dims.x; ++x) {
                const Vec3 p{double(x), double(y), double(z)};
                double level = spec.background_level;

                const Vec3 ht = vol_to_body.apply(p - pose.torso_center);
                const double tq = (ht.x / torso_radii.x) * (ht.x / torso_radii.x) +
                                  (ht.y / torso_radii.y) * (ht.y / torso_radii.y) +
                                  (ht.z / torso_radii.z) * (ht.z / torso_radii.z);
                if (tq <= 1.0) level = std::max(level, spec.torso_level);
                const Vec3 hh = p - pose.head_center;
                if (dot(hh, hh) <= head_r2) level = std::max(level, spec.torso_level);

                bool on_limb = false;
                for (const auto& [a, b] : capsules) {
                    if (point_segment_distance(p, a, b) <= limb_r) {
                        on_limb = true;
                        break;
                    }
                }
                if (!on_limb) {
                    for (const Vec3& e : eyes) {
                        const Vec3 d = p - e;
                        if (dot(d, d) <= eye_r2) {
                            on_limb = true;
                            break;
                        }
                    }
                }
                if (on_limb) level = std::max(level, spec.limb_level);

                v.at(x, y, z) = static_cast<float>(level);
            }
        }
    }

    if (spec.noise_sigma > 0.0) {
        for (auto& voxel : v.voxels) {
            voxel += static_cast<float>(rng.normal(0.0, spec.noise_sigma));
        }
    }
    v.meta["source"] = "phantom";
    v.meta["seed"] = std::to_string(seed);
    return v;
}

}  // namespace fetalpose
