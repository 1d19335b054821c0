#pragma once

// Online training-time transforms. Both modalities go through nearest-
// neighbor scaling and rotation so no interpolated depth values are ever
// created; every nonzero output depth is an input depth divided by the
// scale factor. Color jitter and normalization touch RGB only; the
// horizontal flip is synchronized across modalities.

#include <array>
#include <utility>

#include "s2d/image.hpp"
#include "s2d/rng.hpp"

namespace s2d {

struct AugmentParams {
    double scale = 1.0;     // in [1, 1.5]; image grows, depths shrink by 1/scale
    double rot_deg = 0.0;   // in [-5, 5]
    double jitter_b = 1.0;  // brightness, contrast, saturation factors in [0.6, 1.4]
    double jitter_c = 1.0;
    double jitter_s = 1.0;
    bool flip = false;      // drawn with probability 0.5
    i64 crop_h = 0, crop_w = 0;
};

// The parameters that leave a frame unchanged except for normalization.
AugmentParams identity_augment_params(i64 h, i64 w);

// Draw order is fixed (scale, rotation, three jitters, flip) so a given
// rng state always produces the same transform.
AugmentParams draw_augment_params(i64 crop_h, i64 crop_w, Rng& rng);

struct Augmented {
    RgbImage rgb;    // jittered and normalized
    DepthMap depth;  // divided by scale; out-of-frame pixels invalid
};

// Pipeline order: scale, rotate, jitter, normalize, flip, center crop.
Augmented augment(const RgbImage& rgb, const DepthMap& depth, const AugmentParams& p,
                  const std::array<double, 3>& mean, const std::array<double, 3>& std);

}  // namespace s2d
