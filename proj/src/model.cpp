#include "refseg/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "refseg/tensor_io.hpp"

namespace refseg {

namespace {

size_t pixel_count(const TensorF& t) {
    return static_cast<size_t>(t.dim(t.rank() - 2)) * t.dim(t.rank() - 1);
}

std::vector<float> gaussian_kernel(float sigma) {
    int radius = std::max(1, static_cast<int>(std::ceil(2.f * sigma)));
    std::vector<float> k(static_cast<size_t>(2 * radius + 1));
    float sum = 0.f;
    for (int i = -radius; i <= radius; ++i) {
        float v = std::exp(-0.5f * static_cast<float>(i * i) / (sigma * sigma));
        k[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    for (float& v : k) v /= sum;
    return k;
}

// Separable convolution with replicate padding.
void blur_into(const float* src, float* dst, uint32_t h, uint32_t w, float sigma,
               std::vector<float>& scratch) {
    auto k = gaussian_kernel(sigma);
    int r = (static_cast<int>(k.size()) - 1) / 2;
    scratch.resize(static_cast<size_t>(h) * w);
    for (uint32_t y = 0; y < h; ++y) {
        for (uint32_t x = 0; x < w; ++x) {
            float acc = 0.f;
            for (int i = -r; i <= r; ++i) {
                int xi = std::clamp(static_cast<int>(x) + i, 0, static_cast<int>(w) - 1);
                acc += k[static_cast<size_t>(i + r)] * src[y * w + static_cast<uint32_t>(xi)];
            }
            scratch[y * w + x] = acc;
        }
    }
    for (uint32_t y = 0; y < h; ++y) {
        for (uint32_t x = 0; x < w; ++x) {
            float acc = 0.f;
            for (int i = -r; i <= r; ++i) {
                int yi = std::clamp(static_cast<int>(y) + i, 0, static_cast<int>(h) - 1);
                acc += k[static_cast<size_t>(i + r)] * scratch[static_cast<uint32_t>(yi) * w + x];
            }
            dst[y * w + x] = acc;
        }
    }
}

}  // namespace

TensorF compute_feature_bank(const TensorF& image, const ModelConfig& cfg) {
    if (image.rank() != 3 || image.dim(0) != 1)
        throw std::invalid_argument("expected a (1,h,w) image, got " +
                                    shape_string(image.dims()));
    const uint32_t h = image.dim(1), w = image.dim(2);
    TensorF bank({static_cast<uint32_t>(cfg.bank_channels()), h, w});
    const float* img = image.data();
    std::vector<float> scratch;

    std::copy(img, img + static_cast<size_t>(h) * w, bank.plane(0));
    blur_into(img, bank.plane(1), h, w, 1.0f, scratch);
    blur_into(img, bank.plane(2), h, w, 2.0f, scratch);

    float* gx = bank.plane(3);
    float* gy = bank.plane(4);
    for (uint32_t y = 0; y < h; ++y) {
        for (uint32_t x = 0; x < w; ++x) {
            uint32_t xm = x > 0 ? x - 1 : 0, xp = x + 1 < w ? x + 1 : w - 1;
            uint32_t ym = y > 0 ? y - 1 : 0, yp = y + 1 < h ? y + 1 : h - 1;
            gx[y * w + x] = 0.5f * (img[y * w + xp] - img[y * w + xm]);
            gy[y * w + x] = 0.5f * (img[yp * w + x] - img[ym * w + x]);
        }
    }

    float* mean = bank.plane(5);
    float* var = bank.plane(6);
    for (uint32_t y = 0; y < h; ++y) {
        for (uint32_t x = 0; x < w; ++x) {
            float s = 0.f, s2 = 0.f;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    uint32_t yy = static_cast<uint32_t>(
                        std::clamp(static_cast<int>(y) + dy, 0, static_cast<int>(h) - 1));
                    uint32_t xx = static_cast<uint32_t>(
                        std::clamp(static_cast<int>(x) + dx, 0, static_cast<int>(w) - 1));
                    float v = img[yy * w + xx];
                    s += v;
                    s2 += v * v;
                }
            }
            float m = s / 9.f;
            mean[y * w + x] = m;
            var[y * w + x] = std::max(0.f, s2 / 9.f - m * m);
        }
    }

    // Oscillation energy: 3x3-averaged magnitudes of one-pixel steps. Central
    // differences cancel on period-2 texture, and raw step signs alternate
    // with the phase; averaged magnitudes stay flat across a texture patch,
    // separate orientations, and ignore additive brightness shifts.
    {
        std::vector<float> step(static_cast<size_t>(h) * w);
        for (int axis = 0; axis < 2; ++axis) {
            for (uint32_t y = 0; y < h; ++y) {
                for (uint32_t x = 0; x < w; ++x) {
                    uint32_t xn = axis == 0 ? (x + 1 < w ? x + 1 : w - 1) : x;
                    uint32_t yn = axis == 0 ? y : (y + 1 < h ? y + 1 : h - 1);
                    step[y * w + x] = std::abs(img[yn * w + xn] - img[y * w + x]);
                }
            }
            float* out = bank.plane(7 + static_cast<uint32_t>(axis));
            for (uint32_t y = 0; y < h; ++y) {
                for (uint32_t x = 0; x < w; ++x) {
                    float s = 0.f;
                    for (int dy = -1; dy <= 1; ++dy) {
                        for (int dx = -1; dx <= 1; ++dx) {
                            uint32_t yy = static_cast<uint32_t>(std::clamp(
                                static_cast<int>(y) + dy, 0, static_cast<int>(h) - 1));
                            uint32_t xx = static_cast<uint32_t>(std::clamp(
                                static_cast<int>(x) + dx, 0, static_cast<int>(w) - 1));
                            s += step[yy * w + xx];
                        }
                    }
                    out[y * w + x] = s / 9.f;
                }
            }
        }
    }

    if (cfg.coord_features) {
        float* cx = bank.plane(9);
        float* cy = bank.plane(10);
        for (uint32_t y = 0; y < h; ++y) {
            for (uint32_t x = 0; x < w; ++x) {
                cx[y * w + x] = static_cast<float>(x) / static_cast<float>(w) - 0.5f;
                cy[y * w + x] = static_cast<float>(y) / static_cast<float>(h) - 0.5f;
            }
        }
    }
    return bank;
}

Gradients Gradients::zeros(const ModelConfig& cfg) {
    Gradients g;
    uint32_t d = static_cast<uint32_t>(cfg.feature_dim);
    uint32_t b = static_cast<uint32_t>(cfg.bank_channels());
    uint32_t c = static_cast<uint32_t>(cfg.num_classes);
    g.w1 = TensorF({d, b});
    g.b1 = TensorF({d});
    g.w2 = TensorF({c, d});
    g.b2 = TensorF({c});
    return g;
}

void Gradients::add(const Gradients& other) {
    auto axpy = [](TensorF& a, const TensorF& b) {
        for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    axpy(w1, other.w1);
    axpy(b1, other.b1);
    axpy(w2, other.w2);
    axpy(b2, other.b2);
}

void Gradients::scale(float factor) {
    for (TensorF* t : {&w1, &b1, &w2, &b2})
        for (float& v : t->flat()) v *= factor;
}

PixelModel PixelModel::init(const ModelConfig& cfg, SeededRng rng) {
    check_class_count(cfg.task, cfg.num_classes);
    if (cfg.feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");

    PixelModel m;
    m.cfg = cfg;
    uint32_t d = static_cast<uint32_t>(cfg.feature_dim);
    uint32_t b = static_cast<uint32_t>(cfg.bank_channels());
    uint32_t c = static_cast<uint32_t>(cfg.num_classes);
    m.w1 = TensorF({d, b});
    m.b1 = TensorF({d});
    m.w2 = TensorF({c, d});
    m.b2 = TensorF({c});

    // Xavier-uniform, row-major draw order: w1 then w2, biases zero.
    auto xavier = [&rng](TensorF& t, int fan_in, int fan_out) {
        float limit = std::sqrt(6.f / static_cast<float>(fan_in + fan_out));
        for (float& v : t.flat())
            v = (2.f * static_cast<float>(rng.next_double()) - 1.f) * limit;
    };
    xavier(m.w1, static_cast<int>(b), static_cast<int>(d));
    xavier(m.w2, static_cast<int>(d), static_cast<int>(c));

    m.m_w1 = TensorF({d, b});
    m.v_w1 = TensorF({d, b});
    m.m_b1 = TensorF({d});
    m.v_b1 = TensorF({d});
    m.m_w2 = TensorF({c, d});
    m.v_w2 = TensorF({c, d});
    m.m_b2 = TensorF({c});
    m.v_b2 = TensorF({c});
    return m;
}

void standardize_feature_planes(TensorF& bank) {
    const uint32_t planes = bank.dim(0);
    const size_t n = static_cast<size_t>(bank.dim(1)) * bank.dim(2);
    for (uint32_t c = 0; c < planes; ++c) {
        float* v = bank.plane(c);
        double sum = 0.0;
        for (size_t p = 0; p < n; ++p) sum += v[p];
        const float mean = static_cast<float>(sum / static_cast<double>(n));
        double var = 0.0;
        for (size_t p = 0; p < n; ++p) {
            const double dev = v[p] - mean;
            var += dev * dev;
        }
        const float inv =
            1.f / std::sqrt(static_cast<float>(var / static_cast<double>(n)) + 1e-6f);
        for (size_t p = 0; p < n; ++p) v[p] = (v[p] - mean) * inv;
    }
}

ForwardCache forward(const PixelModel& model, const TensorF& image) {
    const auto& cfg = model.cfg;
    ForwardCache cache;
    cache.bank = compute_feature_bank(image, cfg);
    standardize_feature_planes(cache.bank);
    const uint32_t h = image.dim(1), w = image.dim(2);
    const size_t n = static_cast<size_t>(h) * w;
    const uint32_t d = static_cast<uint32_t>(cfg.feature_dim);
    const uint32_t b = static_cast<uint32_t>(cfg.bank_channels());
    const uint32_t c = static_cast<uint32_t>(cfg.num_classes);

    cache.pre1 = TensorF({d, h, w});
    cache.features = TensorF({d, h, w});
    for (uint32_t dd = 0; dd < d; ++dd) {
        float* z = cache.pre1.plane(dd);
        float bias = model.b1[dd];
        for (size_t p = 0; p < n; ++p) z[p] = bias;
        for (uint32_t bb = 0; bb < b; ++bb) {
            const float wgt = model.w1(dd, bb);
            const float* src = cache.bank.plane(bb);
            for (size_t p = 0; p < n; ++p) z[p] += wgt * src[p];
        }
        float* f = cache.features.plane(dd);
        for (size_t p = 0; p < n; ++p) f[p] = z[p] > 0.f ? z[p] : 0.f;
    }

    cache.pred.logits = TensorF({c, h, w});
    for (uint32_t cc = 0; cc < c; ++cc) {
        float* z = cache.pred.logits.plane(cc);
        float bias = model.b2[cc];
        for (size_t p = 0; p < n; ++p) z[p] = bias;
        for (uint32_t dd = 0; dd < d; ++dd) {
            const float wgt = model.w2(cc, dd);
            const float* src = cache.features.plane(dd);
            for (size_t p = 0; p < n; ++p) z[p] += wgt * src[p];
        }
    }

    cache.pred.probs = TensorF({c, h, w});
    const float* logits = cache.pred.logits.data();
    float* probs = cache.pred.probs.data();
    if (cfg.task == TaskKind::multi_class) {
        for (size_t p = 0; p < n; ++p) {
            float mx = logits[p];
            for (uint32_t cc = 1; cc < c; ++cc) mx = std::max(mx, logits[cc * n + p]);
            double sum = 0.0;
            for (uint32_t cc = 0; cc < c; ++cc)
                sum += std::exp(static_cast<double>(logits[cc * n + p] - mx));
            for (uint32_t cc = 0; cc < c; ++cc)
                probs[cc * n + p] = static_cast<float>(
                    std::exp(static_cast<double>(logits[cc * n + p] - mx)) / sum);
        }
    } else {
        for (size_t i = 0; i < cache.pred.logits.size(); ++i)
            probs[i] = 1.f / (1.f + std::exp(-logits[i]));
    }
    return cache;
}

void backward(const PixelModel& model, const ForwardCache& cache,
              const TensorF& grad_logits, Gradients& accum) {
    const auto& cfg = model.cfg;
    if (!grad_logits.same_shape(cache.pred.logits))
        throw std::invalid_argument("grad_logits shape mismatch");
    const size_t n = pixel_count(grad_logits);
    const uint32_t d = static_cast<uint32_t>(cfg.feature_dim);
    const uint32_t b = static_cast<uint32_t>(cfg.bank_channels());
    const uint32_t c = static_cast<uint32_t>(cfg.num_classes);

    for (uint32_t cc = 0; cc < c; ++cc) {
        const float* gl = grad_logits.plane(cc);
        for (uint32_t dd = 0; dd < d; ++dd) {
            const float* f = cache.features.plane(dd);
            float acc = 0.f;
            for (size_t p = 0; p < n; ++p) acc += gl[p] * f[p];
            accum.w2(cc, dd) += acc;
        }
        float acc = 0.f;
        for (size_t p = 0; p < n; ++p) acc += gl[p];
        accum.b2[cc] += acc;
    }

    std::vector<float> ghid(n);
    for (uint32_t dd = 0; dd < d; ++dd) {
        std::fill(ghid.begin(), ghid.end(), 0.f);
        for (uint32_t cc = 0; cc < c; ++cc) {
            const float wgt = model.w2(cc, dd);
            const float* gl = grad_logits.plane(cc);
            for (size_t p = 0; p < n; ++p) ghid[p] += wgt * gl[p];
        }
        const float* pre = cache.pre1.plane(dd);
        for (size_t p = 0; p < n; ++p)
            if (pre[p] <= 0.f) ghid[p] = 0.f;

        for (uint32_t bb = 0; bb < b; ++bb) {
            const float* src = cache.bank.plane(bb);
            float acc = 0.f;
            for (size_t p = 0; p < n; ++p) acc += ghid[p] * src[p];
            accum.w1(dd, bb) += acc;
        }
        float acc = 0.f;
        for (size_t p = 0; p < n; ++p) acc += ghid[p];
        accum.b1[dd] += acc;
    }
}

void adam_step(PixelModel& model, const Gradients& grads, float lr, float weight_decay) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    model.adam_steps += 1;
    const double t = static_cast<double>(model.adam_steps);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);

    auto update = [&](TensorF& param, TensorF& m, TensorF& v, const TensorF& g) {
        if (!param.same_shape(g)) throw std::invalid_argument("gradient shape mismatch");
        for (size_t i = 0; i < param.size(); ++i) {
            double gi = g[i];
            double mi = beta1 * m[i] + (1.0 - beta1) * gi;
            double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            double mhat = mi / bc1;
            double vhat = vi / bc2;
            double p = param[i];
            p -= lr * mhat / (std::sqrt(vhat) + eps);
            p -= static_cast<double>(lr) * weight_decay * param[i];
            param[i] = static_cast<float>(p);
        }
    };
    update(model.w1, model.m_w1, model.v_w1, grads.w1);
    update(model.b1, model.m_b1, model.v_b1, grads.b1);
    update(model.w2, model.m_w2, model.v_w2, grads.w2);
    update(model.b2, model.m_b2, model.v_b2, grads.b2);
}

void save_checkpoint(const PixelModel& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "refseg-checkpoint";
    manifest["version"] = 1;
    manifest["model"] = {{"feature_dim", model.cfg.feature_dim},
                         {"num_classes", model.cfg.num_classes},
                         {"task", task_name(model.cfg.task)},
                         {"coord_features", model.cfg.coord_features}};
    manifest["adam_steps"] = model.adam_steps;

    const std::pair<const char*, const TensorF*> entries[] = {
        {"w1", &model.w1},     {"b1", &model.b1},     {"w2", &model.w2},
        {"b2", &model.b2},     {"m_w1", &model.m_w1}, {"v_w1", &model.v_w1},
        {"m_b1", &model.m_b1}, {"v_b1", &model.v_b1}, {"m_w2", &model.m_w2},
        {"v_w2", &model.v_w2}, {"m_b2", &model.m_b2}, {"v_b2", &model.v_b2}};
    nlohmann::json tensors;
    for (const auto& [name, t] : entries) {
        std::string file = std::string(name) + ".rgtf";
        write_tensor(*t, dir / file);
        tensors[name] = file;
    }
    manifest["tensors"] = tensors;

    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write checkpoint manifest: " + dir.string());
}

PixelModel load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("cannot open checkpoint manifest: " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(in);
    if (manifest.value("format", "") != "refseg-checkpoint")
        throw std::runtime_error("not a refseg checkpoint: " + dir.string());

    PixelModel m;
    const auto& mc = manifest.at("model");
    m.cfg.feature_dim = mc.at("feature_dim").get<int>();
    m.cfg.num_classes = mc.at("num_classes").get<int>();
    m.cfg.task = mc.at("task").get<std::string>() == "multi-label" ? TaskKind::multi_label
                                                                   : TaskKind::multi_class;
    m.cfg.coord_features = mc.at("coord_features").get<bool>();
    m.adam_steps = manifest.at("adam_steps").get<int64_t>();

    auto load = [&](const char* name) {
        std::string file = manifest.at("tensors").at(name).get<std::string>();
        return read_tensor_f32(dir / file);
    };
    m.w1 = load("w1");
    m.b1 = load("b1");
    m.w2 = load("w2");
    m.b2 = load("b2");
    m.m_w1 = load("m_w1");
    m.v_w1 = load("v_w1");
    m.m_b1 = load("m_b1");
    m.v_b1 = load("v_b1");
    m.m_w2 = load("m_w2");
    m.v_w2 = load("v_w2");
    m.m_b2 = load("m_b2");
    m.v_b2 = load("v_b2");

    const uint32_t d = static_cast<uint32_t>(m.cfg.feature_dim);
    const uint32_t b = static_cast<uint32_t>(m.cfg.bank_channels());
    const uint32_t c = static_cast<uint32_t>(m.cfg.num_classes);
    if (m.w1.dims() != std::vector<uint32_t>{d, b} ||
        m.w2.dims() != std::vector<uint32_t>{c, d})
        throw std::runtime_error("checkpoint tensor shapes disagree with config: " +
                                 dir.string());
    return m;
}

}  // namespace refseg
