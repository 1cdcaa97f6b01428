#include "fetalpose/augment.hpp"

#include <algorithm>
#include <cmath>

namespace fetalpose {

namespace {

// One +90-degree turn in the plane spanned by axes (a, b): coordinate a picks
// up (D_b - 1) - old_b, coordinate b picks up old_a, and the dims swap.
void quarter_turn(LabeledVolume& v, int axis) {
    const int a = (axis + 1) % 3;
    const int b = (axis + 2) % 3;

    LabeledVolume out;
    out.spacing_mm = v.spacing_mm;
    out.meta = v.meta;
    IVec3 nd = v.dims;
    std::swap(nd[a], nd[b]);
    out.dims = nd;
    std::swap(out.spacing_mm[a], out.spacing_mm[b]);
    out.voxels.resize(out.voxel_count());

    IVec3 q;  // source coordinate
    for (int z = 0; z < out.dims.z; ++z) {
        for (int y = 0; y < out.dims.y; ++y) {
            for (int x = 0; x < out.dims.x; ++x) {
                IVec3 o{x, y, z};
                q[a] = o[b];
                q[b] = v.dims[b] - 1 - o[a];
                q[axis] = o[axis];
                out.voxels[out.index(x, y, z)] = v.at(q.x, q.y, q.z);
            }
        }
    }
    for (int k = 0; k < kNumLandmarks; ++k) {
        Vec3 p = v.landmarks_gt[k], np = p;
        np[a] = (v.dims[b] - 1) - p[b];
        np[b] = p[a];
        out.landmarks_gt[k] = np;
    }
    v = std::move(out);
}

void flip_axis(LabeledVolume& v, int axis) {
    LabeledVolume out;
    out.dims = v.dims;
    out.spacing_mm = v.spacing_mm;
    out.meta = v.meta;
    out.voxels.resize(out.voxel_count());
    for (int z = 0; z < out.dims.z; ++z) {
        for (int y = 0; y < out.dims.y; ++y) {
            for (int x = 0; x < out.dims.x; ++x) {
                IVec3 q{x, y, z};
                q[axis] = v.dims[axis] - 1 - q[axis];
                out.voxels[out.index(x, y, z)] = v.at(q.x, q.y, q.z);
            }
        }
    }
    for (int k = 0; k < kNumLandmarks; ++k) {
        Vec3 p = v.landmarks_gt[k];
        p[axis] = (v.dims[axis] - 1) - p[axis];
        out.landmarks_gt[k] = p;
    }
    v = std::move(out);
}

float sample_trilinear(const LabeledVolume& v, double x, double y, double z) {
    x = std::clamp(x, 0.0, double(v.dims.x - 1));
    y = std::clamp(y, 0.0, double(v.dims.y - 1));
    z = std::clamp(z, 0.0, double(v.dims.z - 1));
    const int x0 = std::min(int(x), v.dims.x - 1), y0 = std::min(int(y), v.dims.y - 1),
              z0 = std::min(int(z), v.dims.z - 1);
    const int x1 = std::min(x0 + 1, v.dims.x - 1), y1 = std::min(y0 + 1, v.dims.y - 1),
              z1 = std::min(z0 + 1, v.dims.z - 1);
    const double fx = x - x0, fy = y - y0, fz = z - z0;

    auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
    const double c00 = lerp(v.at(x0, y0, z0), v.at(x1, y0, z0), fx);
    const double c10 = lerp(v.at(x0, y1, z0), v.at(x1, y1, z0), fx);
    const double c01 = lerp(v.at(x0, y0, z1), v.at(x1, y0, z1), fx);
    const double c11 = lerp(v.at(x0, y1, z1), v.at(x1, y1, z1), fx);
    return static_cast<float>(lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz));
}

void rescale(LabeledVolume& v, double s) {
    LabeledVolume out;
    out.spacing_mm = v.spacing_mm;
    out.meta = v.meta;
    for (int axis = 0; axis < 3; ++axis) {
        // D_out - 1 >= s * (D_in - 1), so scaled landmarks stay inside.
        out.dims[axis] = static_cast<int>(std::ceil(s * (v.dims[axis] - 1))) + 1;
    }
    out.voxels.resize(out.voxel_count());
    for (int z = 0; z < out.dims.z; ++z) {
        for (int y = 0; y < out.dims.y; ++y) {
            for (int x = 0; x < out.dims.x; ++x) {
                out.voxels[out.index(x, y, z)] = sample_trilinear(v, x / s, y / s, z / s);
            }
        }
    }
    for (int k = 0; k < kNumLandmarks; ++k) out.landmarks_gt[k] = v.landmarks_gt[k] * s;
    v = std::move(out);
}

}  // namespace

AugmentDraw sample_augment_draw(Rng& rng, double scale_lo, double scale_hi) {
    AugmentDraw d;
    for (int axis = 0; axis < 3; ++axis) d.flip[axis] = rng.bernoulli(0.5);
    d.rot_axis = static_cast<int>(rng.uniform_index(3));
    d.rot_quarters = static_cast<int>(rng.uniform_index(4));
    d.scale = rng.uniform_real(scale_lo, scale_hi);
    return d;
}

LabeledVolume augment(const LabeledVolume& v, const AugmentDraw& draw) {
    LabeledVolume out = v;
    int reflections = 0;
    for (int axis = 0; axis < 3; ++axis) {
        if (draw.flip[axis]) {
            flip_axis(out, axis);
            ++reflections;
        }
    }
    for (int q = 0; q < draw.rot_quarters; ++q) quarter_turn(out, draw.rot_axis);
    if (draw.scale != 1.0) rescale(out, draw.scale);

    // An odd number of reflections turns the figure into its mirror image, so
    // anatomical left and right swap.
    if (reflections % 2 == 1) {
        auto mirrored = out.landmarks_gt;
        for (int k = 0; k < kNumLandmarks; ++k) {
            mirrored[k] = out.landmarks_gt[lateral_partner(k)];
        }
        out.landmarks_gt = mirrored;
    }
    return out;
}

LabeledVolume augment(const LabeledVolume& v, uint64_t seed) {
    Rng rng(seed);
    return augment(v, sample_augment_draw(rng));
}

}  // namespace fetalpose
