#pragma once

#include <cstdint>
#include <filesystem>

#include "refseg/labels.hpp"
#include "refseg/rng.hpp"
#include "refseg/tensor.hpp"

namespace refseg {

/// (d,h,w) post-activation hidden layer; this is the representation the
/// matcher compares, so it evolves with training while the bank stays fixed.
using FeatureMap = TensorF;

struct ModelConfig {
    int feature_dim = 32;  // d
    int num_classes = 4;   // c, output channels
    TaskKind task = TaskKind::multi_class;
    bool coord_features = false;

    /// Fixed bank: raw, blur(1.0), blur(2.0), grad-x, grad-y, 3x3 mean,
    /// 3x3 variance, 3x3-averaged horizontal and vertical one-pixel step
    /// magnitudes, plus two coordinate channels when enabled.
    int bank_channels() const { return 9 + (coord_features ? 2 : 0); }
};

struct Prediction {
    TensorF logits;  // (c,h,w)
    TensorF probs;   // (c,h,w); softmax over c or per-channel sigmoid
};

struct Gradients {
    TensorF w1, b1, w2, b2;

    static Gradients zeros(const ModelConfig& cfg);
    void add(const Gradients& other);
    void scale(float factor);
};

/// Fixed filter bank feeding one trainable ReLU layer (together f_feat) and a
/// per-pixel linear head (f_cls), with Adam state.
struct PixelModel {
    ModelConfig cfg;
    TensorF w1, b1;  // (d,b), (d)
    TensorF w2, b2;  // (c,d), (c)
    TensorF m_w1, v_w1, m_b1, v_b1, m_w2, v_w2, m_b2, v_b2;
    int64_t adam_steps = 0;

    static PixelModel init(const ModelConfig& cfg, SeededRng rng);
};

struct ForwardCache {
    TensorF bank;  // (b,h,w)
    TensorF pre1;  // (d,h,w) pre-activation
    FeatureMap features;  // (d,h,w) = relu(pre1)
    Prediction pred;
};

TensorF compute_feature_bank(const TensorF& image, const ModelConfig& cfg);

/// Shifts and scales each plane to zero mean and unit variance over the
/// image (constant planes become zero). Fixed conditioning with nothing to
/// train: the raw fields differ in scale by orders of magnitude, and without
/// this the largest one dominates every mixture and every cosine.
void standardize_feature_planes(TensorF& bank);

/// image must be (1,h,w); the bank is standardized before the hidden layer.
/// The cache keeps everything backward needs.
ForwardCache forward(const PixelModel& model, const TensorF& image);

/// Accumulates parameter gradients for d(loss)/d(logits); the bank gets none.
void backward(const PixelModel& model, const ForwardCache& cache,
              const TensorF& grad_logits, Gradients& accum);

/// Adam with decoupled weight decay; beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
void adam_step(PixelModel& model, const Gradients& grads, float lr, float weight_decay);

void save_checkpoint(const PixelModel& model, const std::filesystem::path& dir);
PixelModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace refseg
