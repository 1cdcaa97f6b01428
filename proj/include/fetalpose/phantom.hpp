#pragma once

#include <cstdint>

#include "fetalpose/volume.hpp"

namespace fetalpose {

// Procedural stand-in for scanner data: an articulated 15-joint stick figure
// rendered into a scalar volume. Head and torso are ellipsoids, limbs are
// capsules along the skeleton chains, eyes are small bright spheres, all over
// a flat background plus optional Gaussian noise.
struct PhantomSpec {
    IVec3 dims{48, 48, 48};

    // Template geometry, in voxels at figure_scale = 1 (sized for 48^3).
    double figure_scale = 1.0;
    Vec3 torso_radii{7.5, 5.0, 8.5};
    double head_radius = 4.5;
    double limb_radius = 2.0;
    double eye_radius = 1.6;

    double background_level = 0.0;
    double torso_level = 0.55;
    double limb_level = 0.9;
    double noise_sigma = 0.05;

    // Pose randomization: each limb bone direction is tilted by a random
    // rotation up to joint_angle_range; the whole figure gets a random
    // rotation up to global_rotation_range and a translation up to
    // translation_range per axis.
    double joint_angle_range = 0.45;      // radians
    double global_rotation_range = 0.5;   // radians
    double translation_range = 2.0;       // voxels

    Vec3 spacing_mm{3.0, 3.0, 3.0};
};

// Deterministic for fixed (spec, seed). Rejection-samples poses until the
// figure fits the volume; throws SpecInfeasible when the template cannot fit
// at all or after 100 failed attempts.
LabeledVolume generate_phantom(const PhantomSpec& spec, uint64_t seed);

}  // namespace fetalpose
