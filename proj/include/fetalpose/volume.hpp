#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fetalpose/pose_graph.hpp"
#include "fetalpose/rng.hpp"
#include "fetalpose/vec3.hpp"

namespace fetalpose {

// One action per axis direction, fixed order. "step_voxels" scales the move.
enum class Action : int { pos_x = 0, neg_x = 1, pos_y = 2, neg_y = 3, pos_z = 4, neg_z = 5 };

IVec3 action_delta(Action a, int step_voxels = 1);

// A labeled scalar volume: intensities in x-fastest order, per-axis voxel
// spacing in mm, and the 15 ground-truth landmark coordinates in continuous
// voxel units.
struct LabeledVolume {
    IVec3 dims;
    Vec3 spacing_mm{1.0, 1.0, 1.0};
    std::vector<float> voxels;  // dims.x * dims.y * dims.z, x fastest
    std::array<Vec3, kNumLandmarks> landmarks_gt{};
    std::map<std::string, std::string> meta;

    size_t index(int x, int y, int z) const {
        return static_cast<size_t>(x) +
               static_cast<size_t>(dims.x) * (static_cast<size_t>(y) +
                                              static_cast<size_t>(dims.y) * static_cast<size_t>(z));
    }
    float at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
    float& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
    bool in_bounds(const IVec3& p) const {
        return p.x >= 0 && p.x < dims.x && p.y >= 0 && p.y < dims.y && p.z >= 0 && p.z < dims.z;
    }
    size_t voxel_count() const {
        return static_cast<size_t>(dims.x) * static_cast<size_t>(dims.y) *
               static_cast<size_t>(dims.z);
    }
};

// "LSV1" container: 4-byte magic, u32-LE length-prefixed UTF-8 JSON header
// {dims, spacing_mm, landmarks, meta}, then dims.x*dims.y*dims.z little-endian
// f32 in x-fastest order. Round trips are bit-exact.
void save_volume(const LabeledVolume& v, const std::string& path);
LabeledVolume load_volume(const std::string& path);

// Cubic crop of side `size` centered at `center` (patch index size/2 lands on
// the center voxel); voxels outside the volume read as zero. The center may
// lie anywhere, including outside the volume.
std::vector<float> extract_patch(const LabeledVolume& v, const IVec3& center, int size = 48);

// Deterministic transition: move each position by its action's unit vector
// times step_voxels, then clamp per axis to [0, dims-1].
IVec3 clamp_to_volume(const IVec3& p, const IVec3& dims);
std::array<IVec3, kNumLandmarks> env_step(const std::array<IVec3, kNumLandmarks>& positions,
                                          const std::array<Action, kNumLandmarks>& actions,
                                          const IVec3& dims, int step_voxels = 1);

// Per-agent start positions drawn uniformly over the central box whose side
// per axis is ceil(inner_fraction * D), centered on the volume.
std::array<IVec3, kNumLandmarks> initial_positions(const IVec3& dims, Rng& rng,
                                                   double inner_fraction = 0.15);

// [lo, hi] per axis of the initial-position box (inclusive).
std::pair<IVec3, IVec3> initial_position_box(const IVec3& dims, double inner_fraction = 0.15);

}  // namespace fetalpose
