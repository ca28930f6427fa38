#include "refseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "refseg/threshold.hpp"

namespace refseg {

const char* method_name(Method m) {
    switch (m) {
        case Method::baseline: return "baseline";
        case Method::pseudolabel: return "pseudolabel";
        case Method::nearest_neighbor: return "nearest-neighbor";
        case Method::fixmatch: return "fixmatch";
        case Method::rpg: return "rpg";
        case Method::rpg_plus: return "rpg-plus";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    for (Method m : {Method::baseline, Method::pseudolabel, Method::nearest_neighbor,
                     Method::fixmatch, Method::rpg, Method::rpg_plus})
        if (name == method_name(m)) return m;
    throw std::invalid_argument("unknown method '" + name + "'");
}

bool method_uses_unlabeled(Method m) { return m != Method::baseline; }

bool method_uses_matching(Method m) {
    return m == Method::nearest_neighbor || m == Method::rpg || m == Method::rpg_plus;
}

bool method_uses_consistency(Method m) {
    return m == Method::fixmatch || m == Method::rpg_plus;
}

bool method_uses_tau(Method m) {
    return m == Method::pseudolabel || method_uses_consistency(m);
}

namespace {

std::string stream_name(const char* prefix, int epoch, int step) {
    return std::string(prefix) + "/epoch-" + std::to_string(epoch) + "/step-" +
           std::to_string(step);
}

LabelField threshold_probs(const TensorF& probs, TaskKind task, double tau) {
    return task == TaskKind::multi_class ? threshold_multiclass(probs, tau)
                                         : threshold_multilabel(probs, tau);
}

/// Pixel-mean of one loss term pooled over a batch, with the gradient of
/// that mean pushed back through each image, scaled by `scale`.
struct PooledTerm {
    std::vector<CeTerm> parts;

    double loss_sum() const {
        double s = 0.0;
        for (const auto& p : parts) s += p.loss_sum;
        return s;
    }
    size_t count() const {
        size_t n = 0;
        for (const auto& p : parts) n += p.contributing;
        return n;
    }
    double mean() const {
        size_t n = count();
        return n == 0 ? 0.0 : loss_sum() / static_cast<double>(n);
    }
};

void backprop_term(const PixelModel& model, const std::vector<ForwardCache>& caches,
                   PooledTerm& term, double scale, Gradients& accum) {
    const size_t n = term.count();
    if (n == 0) return;
    const float factor = static_cast<float>(scale / static_cast<double>(n));
    for (size_t i = 0; i < term.parts.size(); ++i) {
        if (term.parts[i].contributing == 0) continue;
        TensorF& g = term.parts[i].grad_logits;
        for (float& v : g.flat()) v *= factor;
        backward(model, caches[i], g, accum);
    }
}

std::vector<uint32_t> draw_batch(size_t available, int want, SeededRng& rng) {
    std::vector<uint32_t> picks;
    picks.reserve(static_cast<size_t>(want));
    if (available >= static_cast<size_t>(want)) {
        std::vector<uint32_t> idx(available);
        std::iota(idx.begin(), idx.end(), 0u);
        for (int t = 0; t < want; ++t) {
            size_t j = static_cast<size_t>(t) +
                       static_cast<size_t>(
                           rng.next_below(static_cast<uint64_t>(available - static_cast<size_t>(t))));
            std::swap(idx[static_cast<size_t>(t)], idx[j]);
            picks.push_back(idx[static_cast<size_t>(t)]);
        }
    } else {
        for (int t = 0; t < want; ++t)
            picks.push_back(
                static_cast<uint32_t>(rng.next_below(static_cast<uint64_t>(available))));
    }
    return picks;
}

}  // namespace

LossReport train_step(PixelModel& model, const Dataset& data, const TrainConfig& cfg,
                      const SeededRng& root, int epoch, int step, StepLog* log) {
    if (data.labeled.empty()) throw std::invalid_argument("no labeled data");
    const TaskKind task = data.task;

    // 1. Pool sampling; identical across methods for a given (root, epoch, step).
    std::vector<const LabelField*> labeled_fields;
    labeled_fields.reserve(data.labeled.size());
    for (const auto& s : data.labeled) labeled_fields.push_back(&s.label);
    SeededRng pool_rng = root.derive(stream_name("pool", epoch, step));
    std::vector<uint32_t> pool =
        sample_pool(labeled_fields, cfg.pool.pool_size, pool_rng);

    // 2. Weak-augment the pool images, forward them, supervised term.
    const int p = static_cast<int>(pool.size());
    std::vector<LabelField> pool_labels;
    std::vector<ForwardCache> pool_caches;
    pool_labels.reserve(static_cast<size_t>(p));
    pool_caches.reserve(static_cast<size_t>(p));
    PooledTerm supervised;
    if (log) {
        log->pool_images = pool;
        log->pool_aug.clear();
        log->unlabeled_images.clear();
        log->unlabeled_aug.clear();
    }
    for (int i = 0; i < p; ++i) {
        const Sample& s = data.labeled[pool[static_cast<size_t>(i)]];
        SeededRng aug_rng = root.derive(
            stream_name("aug", epoch, step) + "/pool-" + std::to_string(i));
        AugRecord rec = draw_augmentation(AugKind::weak, s.image.dim(1), s.image.dim(2),
                                          cfg.aug, aug_rng);
        TensorF img = apply_augmentation(s.image, rec, aug_rng);
        pool_labels.push_back(transform_label(s.label, rec));
        pool_caches.push_back(forward(model, img));
        supervised.parts.push_back(
            weighted_ce(pool_caches.back().pred, task, pool_labels.back(), nullptr));
        if (log) log->pool_aug.push_back(rec);
    }

    PooledTerm unlabeled_term;
    PooledTerm consistency_term;
    std::vector<ForwardCache> weak_caches;
    std::vector<ForwardCache> strong_caches;

    if (method_uses_unlabeled(cfg.method) && !data.unlabeled.empty() &&
        cfg.unlabeled_per_batch > 0) {
        SeededRng batch_rng = root.derive(stream_name("batch", epoch, step));
        std::vector<uint32_t> batch =
            draw_batch(data.unlabeled.size(), cfg.unlabeled_per_batch, batch_rng);
        if (log) log->unlabeled_images = batch;

        ReferencePool refs;
        if (method_uses_matching(cfg.method)) {
            std::vector<const FeatureMap*> feats;
            std::vector<const LabelField*> labs;
            std::vector<uint32_t> slots;
            for (int i = 0; i < p; ++i) {
                feats.push_back(&pool_caches[static_cast<size_t>(i)].features);
                labs.push_back(&pool_labels[static_cast<size_t>(i)]);
                slots.push_back(static_cast<uint32_t>(i));
            }
            refs = build_reference_set(feats, labs, slots, cfg.pool);
            if (log) log->s_clamped = refs.s_clamped;
        }

        for (size_t j = 0; j < batch.size(); ++j) {
            const TensorF& u = data.unlabeled[batch[j]];
            SeededRng aug_rng = root.derive(
                stream_name("aug", epoch, step) + "/unlab-" + std::to_string(j));
            AugRecord rec = draw_augmentation(AugKind::strong, u.dim(1), u.dim(2),
                                              cfg.aug, aug_rng);
            if (log) log->unlabeled_aug.push_back(rec);

            if (cfg.method == Method::pseudolabel) {
                // Self-training on the raw image's own confident predictions.
                weak_caches.push_back(forward(model, u));
                const Prediction& pred = weak_caches.back().pred;
                LabelField target = threshold_probs(pred.probs, task, cfg.tau);
                unlabeled_term.parts.push_back(
                    weighted_ce(pred, task, target, nullptr));
                continue;
            }

            TensorF u_weak = apply_augmentation(u, rec.weak_view(), aug_rng);
            weak_caches.push_back(forward(model, u_weak));
            const ForwardCache& weak = weak_caches.back();

            if (method_uses_matching(cfg.method)) {
                PseudoLabelResult match = assign_labels(weak.features, refs, cfg.pool);
                if (log && match.k_clamped) log->k_clamped = true;
                const TensorF* wgt =
                    cfg.method == Method::nearest_neighbor ? nullptr : &match.weights;
                unlabeled_term.parts.push_back(
                    weighted_ce(weak.pred, task, match.labels, wgt));
            }

            if (method_uses_consistency(cfg.method)) {
                AugRecord extras = rec.extras_view();
                TensorF u_strong = apply_augmentation(u_weak, extras, aug_rng);
                LabelField target = threshold_probs(weak.pred.probs, task, cfg.tau);
                target = transform_label(target, extras);
                apply_cutout_rule(target, rec.cutout);
                strong_caches.push_back(forward(model, u_strong));
                consistency_term.parts.push_back(
                    weighted_ce(strong_caches.back().pred, task, target, nullptr));
            }
        }
    }

    // 3. Backward in fixed order: pool images, weak branch, strong branch.
    Gradients grads = Gradients::zeros(model.cfg);
    backprop_term(model, pool_caches, supervised, cfg.supervised_scale, grads);
    if (!unlabeled_term.parts.empty())
        backprop_term(model, weak_caches, unlabeled_term, cfg.unlabeled_scale, grads);
    if (!consistency_term.parts.empty())
        backprop_term(model, strong_caches, consistency_term, cfg.consistency_scale,
                      grads);
    adam_step(model, grads, cfg.lr, cfg.weight_decay);

    LossReport report;
    report.supervised = supervised.mean();
    report.unlabeled = unlabeled_term.mean();
    report.consistency = consistency_term.mean();
    report.supervised_pixels = supervised.count();
    report.unlabeled_pixels = unlabeled_term.count();
    report.consistency_pixels = consistency_term.count();
    report.total = cfg.supervised_scale * report.supervised +
                   cfg.unlabeled_scale * report.unlabeled +
                   cfg.consistency_scale * report.consistency;
    return report;
}

IoUReport evaluate(const PixelModel& model, const std::vector<Sample>& split) {
    if (split.empty()) throw std::invalid_argument("empty evaluation split");
    const TaskKind task = split[0].label.kind;
    const int classes = task == TaskKind::multi_class ? model.cfg.num_classes
                                                      : split[0].label.num_classes;
    std::vector<size_t> inter(static_cast<size_t>(classes), 0);
    std::vector<size_t> uni(static_cast<size_t>(classes), 0);

    for (const Sample& s : split) {
        ForwardCache cache = forward(model, s.image);
        const TensorF& probs = cache.pred.probs;
        const uint32_t h = s.image.dim(1), w = s.image.dim(2);
        const size_t n = static_cast<size_t>(h) * w;
        if (task == TaskKind::multi_class) {
            const uint32_t c = probs.dim(0);
            for (size_t px = 0; px < n; ++px) {
                uint32_t best = 0;
                float best_p = probs.data()[px];
                for (uint32_t j = 1; j < c; ++j) {
                    float pj = probs.data()[j * n + px];
                    if (pj > best_p) {
                        best_p = pj;
                        best = j;
                    }
                }
                uint32_t truth = s.label.values[px];
                if (best == truth) {
                    ++inter[best];
                    ++uni[best];
                } else {
                    ++uni[best];
                    if (truth < static_cast<uint32_t>(classes)) ++uni[truth];
                }
            }
        } else {
            for (int j = 0; j < classes; ++j) {
                const float* pj = probs.plane(static_cast<uint32_t>(j));
                const uint8_t* tj = s.label.values.data() + static_cast<size_t>(j) * n;
                for (size_t px = 0; px < n; ++px) {
                    bool pred = pj[px] > 0.5f;
                    bool truth = tj[px] != 0;
                    if (pred && truth) ++inter[static_cast<size_t>(j)];
                    if (pred || truth) ++uni[static_cast<size_t>(j)];
                }
            }
        }
    }

    IoUReport report;
    report.class_iou.resize(static_cast<size_t>(classes), 0.0);
    report.class_valid.resize(static_cast<size_t>(classes), false);
    double sum = 0.0;
    int valid = 0;
    for (int j = 0; j < classes; ++j) {
        size_t idx = static_cast<size_t>(j);
        if (uni[idx] == 0) continue;
        report.class_iou[idx] =
            static_cast<double>(inter[idx]) / static_cast<double>(uni[idx]);
        report.class_valid[idx] = true;
        sum += report.class_iou[idx];
        ++valid;
    }
    report.miou = valid == 0 ? 0.0 : sum / static_cast<double>(valid);
    return report;
}

}  // namespace refseg
