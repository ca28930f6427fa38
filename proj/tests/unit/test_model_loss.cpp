#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "fd_check.hpp"
#include "refseg/loss.hpp"
#include "refseg/model.hpp"
#include "refseg/rng.hpp"

using namespace refseg;
namespace fs = std::filesystem;

namespace {

TensorF random_image(uint32_t h, uint32_t w, SeededRng& rng) {
    TensorF img({1, h, w});
    for (auto& v : img.flat()) v = rng.next_float();
    return img;
}

LabelField random_target(const ModelConfig& cfg, uint32_t h, uint32_t w,
                         SeededRng& rng, bool with_undecided) {
    LabelField f = cfg.task == TaskKind::multi_class
                       ? LabelField::make_multi_class(cfg.num_classes, h, w)
                       : LabelField::make_multi_label(cfg.num_classes, h, w);
    for (uint32_t y = 0; y < h; ++y)
        for (uint32_t x = 0; x < w; ++x) {
            LabelCode code =
                cfg.task == TaskKind::multi_class
                    ? static_cast<LabelCode>(rng.next_below(cfg.num_classes))
                    : static_cast<LabelCode>(rng.next_below(1u << cfg.num_classes));
            f.set_code(y, x, code);
        }
    if (with_undecided) {
        f.ensure_decided_mask();
        for (auto& v : f.decided.flat()) v = rng.next_below(4) ? v : 0;
    }
    return f;
}

}  // namespace

TEST_SUITE("model") {
    TEST_CASE("feature bank shape and finiteness") {
        ModelConfig cfg;
        cfg.coord_features = true;
        SeededRng r(61);
        TensorF img = random_image(8, 10, r);
        TensorF bank = compute_feature_bank(img, cfg);
        CHECK(bank.dim(0) == 11);
        CHECK(bank.dim(1) == 8);
        CHECK(bank.dim(2) == 10);
        for (float v : bank.flat()) CHECK(std::isfinite(v));
        // Plane 0 is the raw image.
        for (uint32_t i = 0; i < 80; ++i) CHECK(bank.flat()[i] == img.flat()[i]);
    }

    TEST_CASE("blur preserves a constant image") {
        ModelConfig cfg;
        TensorF img({1, 6, 6});
        for (auto& v : img.flat()) v = 0.42f;
        TensorF bank = compute_feature_bank(img, cfg);
        for (uint32_t p : {1u, 2u, 5u})  // blur and mean planes
            for (uint32_t y = 0; y < 6; ++y)
                for (uint32_t x = 0; x < 6; ++x)
                    CHECK(bank(p, y, x) == doctest::Approx(0.42).epsilon(1e-5));
        // Gradients, variance, and step magnitudes vanish on a constant.
        for (uint32_t p : {3u, 4u, 6u, 7u, 8u})
            for (uint32_t y = 0; y < 6; ++y)
                for (uint32_t x = 0; x < 6; ++x)
                    CHECK(bank(p, y, x) == doctest::Approx(0.0).epsilon(1e-5));
    }

    TEST_CASE("step magnitudes see period-2 stripes and ignore brightness") {
        ModelConfig cfg;
        TensorF img({1, 8, 8});
        for (uint32_t y = 0; y < 8; ++y)
            for (uint32_t x = 0; x < 8; ++x) img(0, y, x) = x % 2 ? 0.5f : 0.3f;
        TensorF bank = compute_feature_bank(img, cfg);
        // Vertical stripes: horizontal steps carry the full amplitude at every
        // interior pixel (no phase dependence), vertical steps carry nothing.
        for (uint32_t y = 0; y < 8; ++y)
            for (uint32_t x = 1; x < 6; ++x) {
                CHECK(bank(7, y, x) == doctest::Approx(0.2).epsilon(1e-5));
                CHECK(bank(8, y, x) == doctest::Approx(0.0).epsilon(1e-5));
            }
        TensorF shifted = img;
        for (auto& v : shifted.flat()) v += 0.17f;
        TensorF bank2 = compute_feature_bank(shifted, cfg);
        for (uint32_t y = 0; y < 8; ++y)
            for (uint32_t x = 0; x < 8; ++x) {
                CHECK(bank2(7, y, x) == doctest::Approx(bank(7, y, x)).epsilon(1e-5));
                CHECK(bank2(8, y, x) == doctest::Approx(bank(8, y, x)).epsilon(1e-5));
            }
    }

    TEST_CASE("softmax probabilities sum to one") {
        ModelConfig cfg;
        cfg.num_classes = 5;
        cfg.feature_dim = 6;
        PixelModel model = PixelModel::init(cfg, SeededRng(62));
        SeededRng r(63);
        ForwardCache cache = forward(model, random_image(4, 4, r));
        for (uint32_t y = 0; y < 4; ++y)
            for (uint32_t x = 0; x < 4; ++x) {
                float sum = 0.f;
                for (uint32_t c = 0; c < 5; ++c) sum += cache.pred.probs(c, y, x);
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
            }
    }

    TEST_CASE("sigmoid head stays per-channel") {
        ModelConfig cfg;
        cfg.task = TaskKind::multi_label;
        cfg.num_classes = 3;
        cfg.feature_dim = 6;
        PixelModel model = PixelModel::init(cfg, SeededRng(64));
        SeededRng r(65);
        ForwardCache cache = forward(model, random_image(4, 4, r));
        for (float v : cache.pred.probs.flat()) {
            CHECK(v > 0.f);
            CHECK(v < 1.f);
        }
    }

    TEST_CASE("init is seed-deterministic") {
        ModelConfig cfg;
        PixelModel a = PixelModel::init(cfg, SeededRng(66));
        PixelModel b = PixelModel::init(cfg, SeededRng(66));
        PixelModel c = PixelModel::init(cfg, SeededRng(67));
        CHECK(a.w1 == b.w1);
        CHECK(a.w2 == b.w2);
        CHECK_FALSE(a.w1 == c.w1);
    }

    TEST_CASE("adam first step moves a parameter by lr against the gradient") {
        ModelConfig cfg;
        cfg.feature_dim = 2;
        cfg.num_classes = 2;
        PixelModel model = PixelModel::init(cfg, SeededRng(68));
        model.w2(0, 0) = 1.0f;
        Gradients g = Gradients::zeros(cfg);
        g.w2(0, 0) = 0.5f;
        adam_step(model, g, 0.01f, 0.f);
        // First Adam step normalizes the magnitude away: m_hat/sqrt(v_hat) = 1.
        CHECK(model.w2(0, 0) == doctest::Approx(0.99).epsilon(1e-5));
        CHECK(model.adam_steps == 1);
    }

    TEST_CASE("weight decay shrinks parameters without gradient") {
        ModelConfig cfg;
        cfg.feature_dim = 2;
        cfg.num_classes = 2;
        PixelModel model = PixelModel::init(cfg, SeededRng(69));
        model.w1(0, 0) = 2.0f;
        Gradients g = Gradients::zeros(cfg);
        adam_step(model, g, 0.1f, 0.01f);
        CHECK(model.w1(0, 0) == doctest::Approx(2.0f - 0.1f * 0.01f * 2.0f).epsilon(1e-4));
    }

    TEST_CASE("checkpoint roundtrip preserves parameters and optimizer state") {
        ModelConfig cfg;
        cfg.feature_dim = 5;
        cfg.num_classes = 3;
        cfg.coord_features = true;
        PixelModel model = PixelModel::init(cfg, SeededRng(70));
        Gradients g = Gradients::zeros(cfg);
        g.w1(0, 0) = 0.25f;
        adam_step(model, g, 0.01f, 0.001f);

        fs::path dir = fs::temp_directory_path() / "refseg-test-ckpt";
        fs::create_directories(dir);
        save_checkpoint(model, dir);
        PixelModel back = load_checkpoint(dir);
        CHECK(back.cfg.feature_dim == 5);
        CHECK(back.cfg.coord_features);
        CHECK(back.adam_steps == 1);
        CHECK(back.w1 == model.w1);
        CHECK(back.b2 == model.b2);
        CHECK(back.m_w1 == model.m_w1);
        CHECK(back.v_w1 == model.v_w1);
        fs::remove_all(dir);
    }
}

TEST_SUITE("loss") {
    TEST_CASE("uniform prediction gives log(c) cross-entropy") {
        ModelConfig cfg;
        cfg.num_classes = 4;
        Prediction pred;
        pred.logits = TensorF::full({4, 2, 2}, 0.f);
        pred.probs = TensorF::full({4, 2, 2}, 0.25f);
        LabelField target = LabelField::make_multi_class(4, 2, 2);
        CeTerm term = weighted_ce(pred, TaskKind::multi_class, target, nullptr);
        CHECK(term.contributing == 4);
        CHECK(term.mean() == doctest::Approx(std::log(4.0)).epsilon(1e-6));
    }

    TEST_CASE("zero-weight pixels contribute nothing") {
        Prediction pred;
        pred.logits = TensorF::full({2, 2, 2}, 0.f);
        pred.probs = TensorF::full({2, 2, 2}, 0.5f);
        LabelField target = LabelField::make_multi_class(2, 2, 2);
        TensorF weights = TensorF::full({2, 2}, 1.f);
        weights(0, 0) = 0.f;
        weights(1, 1) = 0.f;
        CeTerm term = weighted_ce(pred, TaskKind::multi_class, target, &weights);
        CHECK(term.contributing == 2);
        CHECK(term.mean() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
        CHECK(term.grad_logits(0, 0, 0) == 0.f);
        CHECK(term.grad_logits(1, 1, 1) == 0.f);
    }

    TEST_CASE("undecided pixels are skipped") {
        Prediction pred;
        pred.logits = TensorF::full({2, 2, 2}, 0.f);
        pred.probs = TensorF::full({2, 2, 2}, 0.5f);
        LabelField target = LabelField::make_multi_class(2, 2, 2);
        target.ensure_decided_mask();
        target.decided(0, 1) = 0;
        CeTerm term = weighted_ce(pred, TaskKind::multi_class, target, nullptr);
        CHECK(term.contributing == 3);
        CHECK(term.grad_logits(0, 0, 1) == 0.f);
        CHECK(term.grad_logits(1, 0, 1) == 0.f);
    }

    TEST_CASE("fractional weights scale loss and gradient linearly") {
        Prediction pred;
        pred.logits = TensorF({2, 1, 1});
        pred.logits.flat()[0] = 0.3f;
        pred.logits.flat()[1] = -0.2f;
        pred.probs = TensorF({2, 1, 1});
        float z0 = std::exp(0.3f), z1 = std::exp(-0.2f);
        pred.probs.flat()[0] = z0 / (z0 + z1);
        pred.probs.flat()[1] = z1 / (z0 + z1);
        LabelField target = LabelField::make_multi_class(2, 1, 1);
        target.set_code(0, 0, 1);

        CeTerm full = weighted_ce(pred, TaskKind::multi_class, target, nullptr);
        TensorF weights = TensorF::full({1, 1}, 0.37f);
        CeTerm part = weighted_ce(pred, TaskKind::multi_class, target, &weights);
        CHECK(part.loss_sum == doctest::Approx(0.37 * full.loss_sum).epsilon(1e-6));
        CHECK(part.grad_logits.flat()[0] ==
              doctest::Approx(0.37f * full.grad_logits.flat()[0]).epsilon(1e-5));
    }

    TEST_CASE("multi-label loss averages over decided channels") {
        Prediction pred;
        pred.logits = TensorF::full({2, 1, 1}, 0.f);
        pred.probs = TensorF::full({2, 1, 1}, 0.5f);
        LabelField target = LabelField::make_multi_label(2, 1, 1);
        target.set_code(0, 0, 0b01);
        CeTerm both = weighted_ce(pred, TaskKind::multi_label, target, nullptr);
        CHECK(both.contributing == 1);
        // softplus(0) per channel, averaged over 2 channels.
        CHECK(both.mean() == doctest::Approx(std::log(2.0)).epsilon(1e-6));

        target.ensure_decided_mask();
        target.decided(0, 0, 0) = 0;  // only channel 1 remains decided
        CeTerm one = weighted_ce(pred, TaskKind::multi_label, target, nullptr);
        CHECK(one.contributing == 1);
        CHECK(one.mean() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
        CHECK(one.grad_logits(0, 0, 0) == 0.f);
        CHECK(one.grad_logits(1, 0, 0) != 0.f);
    }

    TEST_CASE("cross-entropy gradient matches finite differences on logits") {
        SeededRng root(72);
        double worst = 0.0;
        for (int it = 0; it < 8; ++it) {
            SeededRng r = root.derive("ce-" + std::to_string(it));
            ModelConfig cfg;
            cfg.num_classes = 2 + static_cast<int>(r.next_below(3));
            cfg.task = (it % 2) ? TaskKind::multi_label : TaskKind::multi_class;
            Prediction pred;
            pred.logits = TensorF({static_cast<uint32_t>(cfg.num_classes), 4, 4});
            for (auto& v : pred.logits.flat())
                v = static_cast<float>(2.0 * r.next_normal());
            LabelField target = random_target(cfg, 4, 4, r, it % 2 == 0);
            TensorF weights({4, 4});
            for (auto& v : weights.flat()) v = r.next_float();
            worst = std::max(worst,
                             testsupport::max_relative_ce_grad_error(
                                 pred, cfg.task, target, &weights));
        }
        CHECK(worst < 1e-3);
    }

    TEST_CASE("analytic gradients match finite differences through the model") {
        SeededRng root(71);
        double worst = 0.0;
        for (int it = 0; it < 10; ++it) {
            SeededRng r = root.derive("fd-" + std::to_string(it));
            ModelConfig cfg;
            cfg.feature_dim = 4;
            cfg.num_classes = 2 + static_cast<int>(r.next_below(2));
            cfg.task = (it % 2) ? TaskKind::multi_label : TaskKind::multi_class;
            cfg.coord_features = (it % 3) == 0;
            PixelModel model = PixelModel::init(cfg, r.derive("init"));
            TensorF img = random_image(8, 8, r);
            testsupport::clear_relu_margin(model, img, 0.05f);
            LabelField target = random_target(cfg, 8, 8, r, it % 2 == 0);
            TensorF weights({8, 8});
            for (auto& v : weights.flat()) v = r.next_float();
            worst = std::max(worst, testsupport::max_relative_grad_error(
                                        model, img, target, &weights));
        }
        CHECK(worst < 1e-3);
    }
}
