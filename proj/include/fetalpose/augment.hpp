#pragma once

#include <array>
#include <cstdint>

#include "fetalpose/volume.hpp"

namespace fetalpose {

// One sampled augmentation: per-axis flips, a multiple-of-90-degree rotation
// about one axis, then isotropic scaling. Exposed so tests can force exact
// draws (identity, single flip, fixed scale).
struct AugmentDraw {
    std::array<bool, 3> flip{false, false, false};
    int rot_axis = 0;      // 0=x, 1=y, 2=z
    int rot_quarters = 0;  // 0..3 quarter turns
    double scale = 1.0;    // isotropic, trilinear resample
};

AugmentDraw sample_augment_draw(Rng& rng, double scale_lo = 0.8, double scale_hi = 1.5);

// Applies flips, then the rotation, then scaling; landmarks follow the same
// spatial map. When the composed linear map reverses orientation (odd number
// of flips) the left/right landmark labels are swapped.
LabeledVolume augment(const LabeledVolume& v, const AugmentDraw& draw);
LabeledVolume augment(const LabeledVolume& v, uint64_t seed);

}  // namespace fetalpose
