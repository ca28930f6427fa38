#include "refseg/threshold.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace refseg {

namespace {

void check_probs_shape(const TensorF& probs) {
    if (probs.rank() != 3) throw std::invalid_argument("probs must be (c,h,w)");
    if (probs.dim(0) < 1) throw std::invalid_argument("probs needs >= 1 channel");
}

}  // namespace

LabelField threshold_multiclass(const TensorF& probs, double tau) {
    check_probs_shape(probs);
    const uint32_t c = probs.dim(0), h = probs.dim(1), w = probs.dim(2);
    if (!(tau > 1.0 / static_cast<double>(c) && tau < 1.0))
        throw std::invalid_argument("multi-class threshold must be in (1/" +
                                    std::to_string(c) + ", 1), got " +
                                    std::to_string(tau));

    LabelField out = LabelField::make_multi_class(static_cast<int>(c), h, w);
    out.ensure_decided_mask();
    for (uint32_t y = 0; y < h; ++y) {
        for (uint32_t x = 0; x < w; ++x) {
            uint32_t best = 0;
            float best_p = probs(0, y, x);
            for (uint32_t j = 1; j < c; ++j) {
                float p = probs(j, y, x);
                if (p > best_p) {
                    best_p = p;
                    best = j;
                }
            }
            // float compare: probabilities are float, and a probability that
            // sits exactly on the threshold must stay undecided.
            if (best_p > static_cast<float>(tau)) {
                out.values(y, x) = static_cast<uint8_t>(best);
            } else {
                out.decided(y, x) = 0;
            }
        }
    }
    return out;
}

LabelField threshold_multilabel(const TensorF& probs, double tau) {
    check_probs_shape(probs);
    const uint32_t c = probs.dim(0), h = probs.dim(1), w = probs.dim(2);
    if (!(tau > 0.5 && tau < 1.0))
        throw std::invalid_argument("multi-label threshold must be in (0.5, 1), got " +
                                    std::to_string(tau));

    // float compare, same boundary rule as the multi-class path.
    const float margin = static_cast<float>(tau) - 0.5f;
    LabelField out = LabelField::make_multi_label(static_cast<int>(c), h, w);
    out.ensure_decided_mask();
    for (uint32_t j = 0; j < c; ++j) {
        for (uint32_t y = 0; y < h; ++y) {
            for (uint32_t x = 0; x < w; ++x) {
                float p = probs(j, y, x);
                if (std::abs(p - 0.5f) > margin) {
                    out.values(j, y, x) = p > 0.5f ? 1 : 0;
                } else {
                    out.decided(j, y, x) = 0;
                }
            }
        }
    }
    return out;
}

void apply_cutout_rule(LabelField& label, const CutoutRect& rect) {
    if (rect.empty()) return;
    const uint32_t h = label.height(), w = label.width();
    if (rect.y0 + rect.h > h || rect.x0 + rect.w > w)
        throw std::invalid_argument("cutout rectangle exceeds the label map");
    label.ensure_decided_mask();
    for (uint32_t y = rect.y0; y < rect.y0 + rect.h; ++y) {
        for (uint32_t x = rect.x0; x < rect.x0 + rect.w; ++x) {
            label.set_code(y, x, 0);
            if (label.kind == TaskKind::multi_class) {
                label.decided(y, x) = 1;
            } else {
                for (int j = 0; j < label.num_classes; ++j)
                    label.decided(static_cast<uint32_t>(j), y, x) = 1;
            }
        }
    }
}

}  // namespace refseg
