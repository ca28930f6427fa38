#pragma once

#include "refseg/augment.hpp"
#include "refseg/labels.hpp"
#include "refseg/tensor.hpp"

namespace refseg {

/// Per-pixel argmax where the winning probability strictly exceeds tau;
/// everything else IGNORE. Requires tau in (1/c, 1) so at most one class can
/// clear the bar. Argmax ties go to the lowest class index.
LabelField threshold_multiclass(const TensorF& probs, double tau);

/// Per pixel and per class: decided iff |p - 0.5| > tau - 0.5 strictly, then
/// rounded to 0 or 1; undecided channels IGNORE. Requires tau in (0.5, 1).
LabelField threshold_multilabel(const TensorF& probs, double tau);

/// Forces the CutOut region of a consistency target to background (class 0 /
/// all-zero vector), overriding IGNORE there. No-op for an empty rectangle.
void apply_cutout_rule(LabelField& label, const CutoutRect& rect);

}  // namespace refseg
