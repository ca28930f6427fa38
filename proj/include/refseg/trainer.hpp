#pragma once

#include <string>
#include <vector>

#include "refseg/augment.hpp"
#include "refseg/loss.hpp"
#include "refseg/matcher.hpp"
#include "refseg/model.hpp"
#include "refseg/pool.hpp"
#include "refseg/synth.hpp"

namespace refseg {

enum class Method {
    baseline,          // supervised term only
    pseudolabel,       // + self-training on thresholded unaugmented predictions
    nearest_neighbor,  // + reference matching with all weights forced to 1
    fixmatch,          // + weak/strong consistency only
    rpg,               // + entropy-weighted reference matching
    rpg_plus,          // rpg + consistency
};

const char* method_name(Method m);
Method parse_method(const std::string& name);
bool method_uses_unlabeled(Method m);
bool method_uses_matching(Method m);
bool method_uses_consistency(Method m);
bool method_uses_tau(Method m);

struct TrainConfig {
    Method method = Method::rpg;
    PoolConfig pool;
    AugmentParams aug;
    double tau = 0.95;
    int unlabeled_per_batch = 5;
    int epochs = 30;
    int steps_per_epoch = 8;
    int eval_every = 10;  // epochs between validation passes
    float lr = 0.0005f;
    float weight_decay = 0.0005f;
    // Term multipliers; the losses themselves are plain sums of per-term
    // pixel means, these exist for sensitivity studies only.
    double supervised_scale = 1.0;
    double unlabeled_scale = 1.0;
    double consistency_scale = 1.0;
};

/// Per-step losses. Each term is a mean over that term's contributing pixels
/// pooled across the batch; total is the multiplier-weighted sum of enabled
/// terms. Pixels that are IGNORE or carry weight 0 are excluded from both
/// the sums and the counts.
struct LossReport {
    double supervised = 0.0;
    double unlabeled = 0.0;
    double consistency = 0.0;
    double total = 0.0;
    size_t supervised_pixels = 0;
    size_t unlabeled_pixels = 0;
    size_t consistency_pixels = 0;
};

/// What one step did, for the run logs.
struct StepLog {
    std::vector<uint32_t> pool_images;
    std::vector<AugRecord> pool_aug;
    std::vector<uint32_t> unlabeled_images;
    std::vector<AugRecord> unlabeled_aug;
    bool k_clamped = false;
    bool s_clamped = false;
};

/// One optimizer step: samples the pool, augments, forwards, builds the
/// method's loss terms, backpropagates in fixed image order, applies Adam.
/// All randomness comes from streams derived off `root` and (epoch, step),
/// so a method never perturbs another method's draws.
LossReport train_step(PixelModel& model, const Dataset& data, const TrainConfig& cfg,
                      const SeededRng& root, int epoch, int step, StepLog* log);

/// Per-class intersection-over-union aggregated over a whole split.
/// Multi-class scores every class index including background; multi-label
/// scores each channel. Classes whose union is empty are flagged invalid and
/// excluded from the mean.
struct IoUReport {
    std::vector<double> class_iou;
    std::vector<bool> class_valid;
    double miou = 0.0;

    int valid_count() const {
        int n = 0;
        for (bool v : class_valid) n += v;
        return n;
    }
};

/// Prediction rule: multi-class argmax (ties to the lowest class),
/// multi-label per-channel probability > 0.5.
IoUReport evaluate(const PixelModel& model, const std::vector<Sample>& split);

}  // namespace refseg
