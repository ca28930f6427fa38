#pragma once

#include "refseg/labels.hpp"
#include "refseg/model.hpp"
#include "refseg/tensor.hpp"

namespace refseg {

/// One cross-entropy term over one image, kept as a running sum so terms can
/// be pooled across a batch before dividing. grad_logits is the gradient of
/// loss_sum (not of the mean); callers rescale when they build the step
/// gradient. Pixels that are IGNORE or carry weight 0 contribute exactly 0
/// to all three fields.
struct CeTerm {
    double loss_sum = 0.0;
    size_t contributing = 0;
    TensorF grad_logits;  // (c,h,w), d(loss_sum)/d(logits)

    double mean() const {
        return contributing == 0 ? 0.0 : loss_sum / static_cast<double>(contributing);
    }
};

/// Softmax or per-channel binary cross-entropy per the prediction's task
/// kind, optionally scaled per pixel by `weights` ((h,w), nullptr for all-1).
/// Multi-class targets must index a valid class; multi-label targets are the
/// 0/1 membership planes. Undecided pixels (label.decided) are skipped.
/// Multi-label: undecided individual channels are skipped while decided ones
/// still count, and `contributing` counts pixels with at least one decided
/// channel; the per-pixel loss is the mean over its decided channels so the
/// pooled mean stays a per-pixel quantity.
CeTerm weighted_ce(const Prediction& pred, TaskKind task, const LabelField& target,
                   const TensorF* weights);

}  // namespace refseg
