#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "refseg/augment.hpp"
#include "refseg/rng.hpp"
#include "refseg/threshold.hpp"

using namespace refseg;

namespace {

TensorF ramp_image(uint32_t h, uint32_t w) {
    TensorF img({1, h, w});
    for (uint32_t i = 0; i < h * w; ++i)
        img.flat()[i] = static_cast<float>(i) / static_cast<float>(h * w);
    return img;
}

LabelField checker_label(uint32_t h, uint32_t w, int classes) {
    LabelField f = LabelField::make_multi_class(classes, h, w);
    for (uint32_t y = 0; y < h; ++y)
        for (uint32_t x = 0; x < w; ++x)
            f.set_code(y, x, static_cast<LabelCode>((y + x) % classes));
    return f;
}

}  // namespace

TEST_SUITE("augment") {
    TEST_CASE("weak draw only ever flips") {
        AugmentParams params;
        SeededRng r(80);
        int flips = 0;
        for (int it = 0; it < 200; ++it) {
            AugRecord rec = draw_augmentation(AugKind::weak, 16, 16, params, r);
            CHECK(rec.kind == AugKind::weak);
            CHECK(rec.angle_deg == 0.f);
            CHECK(rec.noise_sigma == 0.f);
            CHECK(rec.jitter == 0.f);
            CHECK(rec.cutout.empty());
            flips += rec.hflip;
        }
        CHECK(flips > 50);
        CHECK(flips < 150);
    }

    TEST_CASE("strong draw stays inside the configured ranges") {
        AugmentParams params;
        SeededRng r(81);
        for (int it = 0; it < 200; ++it) {
            AugRecord rec = draw_augmentation(AugKind::strong, 20, 30, params, r);
            CHECK(std::abs(rec.angle_deg) <= params.max_rotation_deg);
            CHECK(rec.noise_sigma >= 0.f);
            CHECK(rec.noise_sigma <= params.max_noise_sigma);
            CHECK(std::abs(rec.jitter) <= params.max_jitter);
            CHECK_FALSE(rec.cutout.empty());
            CHECK(rec.cutout.y0 + rec.cutout.h <= 20);
            CHECK(rec.cutout.x0 + rec.cutout.w <= 30);
            float frac = static_cast<float>(rec.cutout.h * rec.cutout.w) / (20.f * 30.f);
            CHECK(frac >= 0.02f);  // rounding can undershoot the nominal 5%
            CHECK(frac <= 0.30f);
        }
    }

    TEST_CASE("double flip restores the image") {
        AugRecord flip;
        flip.hflip = true;
        SeededRng r(82);
        TensorF img = ramp_image(6, 9);
        TensorF once = apply_augmentation(img, flip, r);
        CHECK_FALSE(once == img);
        TensorF twice = apply_augmentation(once, flip, r);
        CHECK(twice == img);
    }

    TEST_CASE("zero-angle strong record without noise is geometry-only") {
        AugRecord rec;
        rec.kind = AugKind::strong;
        rec.cutout = {1, 2, 3, 4};
        SeededRng r(83);
        TensorF img = ramp_image(8, 8);
        TensorF out = apply_augmentation(img, rec, r);
        for (uint32_t y = 0; y < 8; ++y)
            for (uint32_t x = 0; x < 8; ++x) {
                bool in_rect = y >= 1 && y < 4 && x >= 2 && x < 6;
                CHECK(out(0, y, x) == (in_rect ? 0.f : img(0, y, x)));
            }
    }

    TEST_CASE("weak view plus extras reproduces the strong geometry") {
        AugmentParams params;
        SeededRng draw(84);
        for (int it = 0; it < 20; ++it) {
            AugRecord rec = draw_augmentation(AugKind::strong, 12, 12, params, draw);
            rec.noise_sigma = 0.f;  // keep the comparison purely geometric
            rec.jitter = 0.f;
            rec.cutout = {};
            AugRecord weak = rec.weak_view();
            AugRecord extras = rec.extras_view();
            CHECK(weak.hflip == rec.hflip);
            CHECK(extras.hflip == false);
            CHECK(extras.angle_deg == rec.angle_deg);

            TensorF img = ramp_image(12, 12);
            SeededRng r1(1), r2(1), r3(1);
            TensorF direct = apply_augmentation(img, rec, r1);
            TensorF stacked =
                apply_augmentation(apply_augmentation(img, weak, r2), extras, r3);
            CHECK(direct == stacked);
        }
    }

    TEST_CASE("label transform follows the same geometry") {
        AugmentParams params;
        SeededRng draw(85);
        AugRecord rec = draw_augmentation(AugKind::strong, 10, 10, params, draw);
        LabelField lab = checker_label(10, 10, 3);
        LabelField moved = transform_label(lab, rec);
        CHECK(moved.height() == 10);
        CHECK(moved.width() == 10);
        if (rec.angle_deg != 0.f) CHECK_FALSE(moved.all_decided());

        // Flip-only transform is exact and keeps everything decided.
        AugRecord flip;
        flip.hflip = true;
        LabelField flipped = transform_label(lab, flip);
        CHECK(flipped.all_decided());
        for (uint32_t y = 0; y < 10; ++y)
            for (uint32_t x = 0; x < 10; ++x)
                CHECK(flipped.code_at(y, x) == lab.code_at(y, 9 - x));
    }

    TEST_CASE("rotation moves pixels out of frame into undecided") {
        AugRecord rec;
        rec.kind = AugKind::strong;
        rec.angle_deg = 15.f;
        LabelField lab = checker_label(16, 16, 2);
        LabelField moved = transform_label(lab, rec);
        CHECK_FALSE(moved.all_decided());
        int undecided = 0;
        for (uint8_t v : moved.decided.flat()) undecided += (v == 0);
        CHECK(undecided > 0);
        CHECK(undecided < 16 * 16 / 2);
    }

    TEST_CASE("noise and jitter keep values in range and are seed-deterministic") {
        AugRecord rec;
        rec.kind = AugKind::strong;
        rec.noise_sigma = 0.1f;
        rec.jitter = 0.15f;
        TensorF img = ramp_image(8, 8);
        SeededRng r1(99), r2(99), r3(100);
        TensorF a = apply_augmentation(img, rec, r1);
        TensorF b = apply_augmentation(img, rec, r2);
        TensorF c = apply_augmentation(img, rec, r3);
        CHECK(a == b);
        CHECK_FALSE(a == c);
        for (float v : a.flat()) {
            CHECK(v >= 0.f);
            CHECK(v <= 1.f);
        }
    }
}

TEST_SUITE("threshold") {
    TEST_CASE("multi-class keeps only confident argmax pixels") {
        TensorF probs({2, 1, 3});
        // Pixel 0: 0.9/0.1 confident class 0. Pixel 1: 0.6/0.4 not confident
        // at tau 0.8. Pixel 2: exactly tau, strict rule drops it.
        probs(0, 0, 0) = 0.9f;
        probs(1, 0, 0) = 0.1f;
        probs(0, 0, 1) = 0.6f;
        probs(1, 0, 1) = 0.4f;
        probs(0, 0, 2) = 0.8f;
        probs(1, 0, 2) = 0.2f;
        LabelField f = threshold_multiclass(probs, 0.8);
        CHECK(f.decided(0, 0) == 1);
        CHECK(f.code_at(0, 0) == 0);
        CHECK(f.decided(0, 1) == 0);
        CHECK(f.decided(0, 2) == 0);
    }

    TEST_CASE("multi-class argmax tie goes to the lowest class") {
        TensorF probs({3, 1, 1});
        probs(0, 0, 0) = 0.2f;
        probs(1, 0, 0) = 0.4f;
        probs(2, 0, 0) = 0.4f;
        LabelField f = threshold_multiclass(probs, 0.35);
        CHECK(f.decided(0, 0) == 1);
        CHECK(f.code_at(0, 0) == 1);
    }

    TEST_CASE("labeled fraction is monotone non-increasing in tau") {
        SeededRng r(90);
        TensorF probs({4, 8, 8});
        for (uint32_t y = 0; y < 8; ++y)
            for (uint32_t x = 0; x < 8; ++x) {
                float z[4], sum = 0.f;
                for (auto& v : z) {
                    v = std::exp(2.f * static_cast<float>(r.next_normal()));
                    sum += v;
                }
                for (uint32_t c = 0; c < 4; ++c) probs(c, y, x) = z[c] / sum;
            }
        int prev = 65;
        for (double tau : {0.3, 0.5, 0.7, 0.9, 0.99}) {
            LabelField f = threshold_multiclass(probs, tau);
            int decided = 0;
            for (uint8_t v : f.decided.flat()) decided += v;
            CHECK(decided <= prev);
            prev = decided;
        }
    }

    TEST_CASE("multi-label thresholds each channel independently") {
        TensorF probs({2, 1, 2});
        probs(0, 0, 0) = 0.97f;  // channel 0 -> 1
        probs(1, 0, 0) = 0.02f;  // channel 1 -> 0
        probs(0, 0, 1) = 0.60f;  // undecided at tau 0.95
        probs(1, 0, 1) = 0.96f;
        LabelField f = threshold_multilabel(probs, 0.95);
        CHECK(f.decided(0, 0, 0) == 1);
        CHECK(f.decided(1, 0, 0) == 1);
        CHECK(f.values(0, 0, 0) == 1);
        CHECK(f.values(1, 0, 0) == 0);
        CHECK(f.decided(0, 0, 1) == 0);
        CHECK(f.decided(1, 0, 1) == 1);
        CHECK(f.values(1, 0, 1) == 1);
    }

    TEST_CASE("multi-label boundary is strict") {
        TensorF probs({1, 1, 2});
        probs(0, 0, 0) = 0.95f;
        probs(0, 0, 1) = 0.05f;
        LabelField f = threshold_multilabel(probs, 0.95);
        CHECK(f.decided(0, 0, 0) == 0);
        CHECK(f.decided(0, 0, 1) == 0);
    }

    TEST_CASE("tau outside the usable range is rejected") {
        TensorF probs({2, 1, 1});
        probs(0, 0, 0) = 0.5f;
        probs(1, 0, 0) = 0.5f;
        CHECK_THROWS_AS((void)threshold_multiclass(probs, 0.5), std::invalid_argument);
        CHECK_THROWS_AS((void)threshold_multiclass(probs, 1.0), std::invalid_argument);
        CHECK_THROWS_AS((void)threshold_multilabel(probs, 0.5), std::invalid_argument);
        CHECK_THROWS_AS((void)threshold_multilabel(probs, 1.1), std::invalid_argument);
    }

    TEST_CASE("cutout region forces background over everything") {
        LabelField f = LabelField::make_multi_class(3, 6, 6);
        for (uint32_t y = 0; y < 6; ++y)
            for (uint32_t x = 0; x < 6; ++x) f.set_code(y, x, 2);
        f.ensure_decided_mask();
        for (auto& v : f.decided.flat()) v = 0;  // everything starts IGNORE

        apply_cutout_rule(f, {1, 1, 3, 2});
        for (uint32_t y = 0; y < 6; ++y)
            for (uint32_t x = 0; x < 6; ++x) {
                bool in_rect = y >= 1 && y < 4 && x >= 1 && x < 3;
                CHECK(f.decided(y, x) == (in_rect ? 1 : 0));
                if (in_rect) CHECK(f.code_at(y, x) == 0);
            }
    }

    TEST_CASE("cutout rule on multi-label clears every channel") {
        LabelField f = LabelField::make_multi_label(2, 4, 4);
        for (uint32_t y = 0; y < 4; ++y)
            for (uint32_t x = 0; x < 4; ++x) f.set_code(y, x, 0b11);
        apply_cutout_rule(f, {0, 0, 2, 2});
        CHECK(f.code_at(0, 0) == 0);
        CHECK(f.code_at(1, 1) == 0);
        CHECK(f.code_at(2, 2) == 0b11);
    }
}
