#pragma once

#include <cstdint>

#include "refseg/labels.hpp"
#include "refseg/pool.hpp"
#include "refseg/tensor.hpp"

namespace refseg {

/// 1 - max(cos, 0) with cos = <a,b> / (|a||b| + 1e-8). Range (apart from
/// rounding) [0, 1]; orthogonal or opposed vectors score 1, parallel 0.
float clipped_cosine(const float* a, const float* b, size_t d);

/// Certainty weight from per-category distances delta[0..categories).
/// Each category gets probability mass (1 - delta + 1e-8), normalized; the
/// weight is one minus the normalized entropy of that distribution, clamped
/// to [0,1]. All-absent categories (every delta 1) give 0, a single zero
/// distance among ones gives a weight at 1 up to rounding.
float entropy_weight(const float* class_distances, int categories);

struct PseudoLabelResult {
    LabelField labels;         // label of each pixel's nearest reference
    TensorF weights;           // (h,w) certainty in [0,1]
    TensorF nearest_distance;  // (h,w)
    TensorF class_distances;   // (C,h,w) per-category minimum over the k nearest
    int k_used = 0;
    bool k_clamped = false;
};

/// Labels every pixel of a (d,h,w) feature map against the reference pool.
/// The pixel label comes from the single nearest reference over the whole
/// pool (ties break toward the lowest reference row); per-category distances
/// and the entropy weight look only at the k nearest rows. Deterministic for
/// any worker count.
PseudoLabelResult assign_labels(const FeatureMap& query, const ReferencePool& refs,
                                const PoolConfig& cfg);

/// Reference implementation: per-pixel distances one scalar pair at a time,
/// no blocking, then the same label/weight definitions. Slow; exists to
/// cross-check assign_labels.
PseudoLabelResult brute_force_oracle(const FeatureMap& query, const ReferencePool& refs,
                                     const PoolConfig& cfg);

}  // namespace refseg
