#pragma once

#include <cstdint>

#include "refseg/labels.hpp"
#include "refseg/rng.hpp"
#include "refseg/tensor.hpp"

namespace refseg {

enum class AugKind { weak, strong };

struct CutoutRect {
    uint32_t y0 = 0, x0 = 0, h = 0, w = 0;
    bool empty() const { return h == 0 || w == 0; }
    bool contains(uint32_t y, uint32_t x) const {
        return y >= y0 && y < y0 + h && x >= x0 && x < x0 + w;
    }
};

/// Everything needed to re-apply one augmentation, minus the per-pixel noise
/// values (those replay from the seed tree). The geometric part (hflip, then
/// rotation about the image center) is shared verbatim by label transfer.
struct AugRecord {
    AugKind kind = AugKind::weak;
    bool hflip = false;
    float angle_deg = 0.f;    // strong only, in [-15, 15]
    float noise_sigma = 0.f;  // strong only, in [0, 0.1]
    float jitter = 0.f;       // strong only, in [-0.2, 0.2]
    CutoutRect cutout;        // strong only; covers 5-25% of the area

    /// The flip alone; a strong draw restricted to its weak prefix.
    AugRecord weak_view() const {
        AugRecord r;
        r.hflip = hflip;
        return r;
    }

    /// Everything past the flip, so strong(x) == extras(weak(x)) exactly.
    AugRecord extras_view() const {
        AugRecord r = *this;
        r.kind = AugKind::strong;
        r.hflip = false;
        return r;
    }
};

struct AugmentParams {
    float max_rotation_deg = 15.f;
    float max_noise_sigma = 0.1f;
    float max_jitter = 0.2f;
    float cutout_min_frac = 0.05f;
    float cutout_max_frac = 0.25f;
    float flip_prob = 0.5f;
};

/// Fixed draw order: flip coin, then (strong only) angle, noise sigma,
/// jitter, cutout area fraction, aspect, y0, x0.
AugRecord draw_augmentation(AugKind kind, uint32_t h, uint32_t w,
                            const AugmentParams& params, SeededRng& rng);

/// Geometry (nearest neighbor, out-of-bounds pixels filled with 0), then
/// jitter, then additive noise drawn from rng, then clamp to [0,1], then the
/// CutOut region zeroed.
TensorF apply_augmentation(const TensorF& image, const AugRecord& rec, SeededRng& rng);

/// Same index map as apply_augmentation; out-of-bounds sources become IGNORE.
/// The CutOut region is untouched here (see apply_cutout_rule).
LabelField transform_label(const LabelField& label, const AugRecord& rec);

}  // namespace refseg
