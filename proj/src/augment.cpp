#include "refseg/augment.hpp"

#include <algorithm>
#include <cmath>

namespace refseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Source index of output pixel (y,x), or (-1,-1) when it falls outside.
/// Forward transform is rotate(flip(input)); sampling inverts the rotation
/// first, then the flip, which keeps stacked application (flip-only followed
/// by rotate-only) bit-identical to one combined pass.
std::pair<int64_t, int64_t> source_index(const AugRecord& rec, uint32_t h, uint32_t w,
                                         uint32_t y, uint32_t x) {
    int64_t sy = y, sx = x;
    if (rec.angle_deg != 0.f) {
        double theta = static_cast<double>(rec.angle_deg) * kPi / 180.0;
        double cy = (static_cast<double>(h) - 1.0) * 0.5;
        double cx = (static_cast<double>(w) - 1.0) * 0.5;
        double dy = static_cast<double>(y) - cy;
        double dx = static_cast<double>(x) - cx;
        double c = std::cos(theta), s = std::sin(theta);
        sx = std::lround(c * dx + s * dy + cx);
        sy = std::lround(-s * dx + c * dy + cy);
        if (sy < 0 || sy >= static_cast<int64_t>(h) || sx < 0 ||
            sx >= static_cast<int64_t>(w))
            return {-1, -1};
    }
    if (rec.hflip) sx = static_cast<int64_t>(w) - 1 - sx;
    return {sy, sx};
}

}  // namespace

AugRecord draw_augmentation(AugKind kind, uint32_t h, uint32_t w,
                            const AugmentParams& params, SeededRng& rng) {
    AugRecord rec;
    rec.kind = kind;
    rec.hflip = rng.next_double() < static_cast<double>(params.flip_prob);
    if (kind == AugKind::weak) return rec;

    rec.angle_deg = static_cast<float>((2.0 * rng.next_double() - 1.0) *
                                       static_cast<double>(params.max_rotation_deg));
    rec.noise_sigma =
        static_cast<float>(rng.next_double() * static_cast<double>(params.max_noise_sigma));
    rec.jitter = static_cast<float>((2.0 * rng.next_double() - 1.0) *
                                    static_cast<double>(params.max_jitter));

    double frac = static_cast<double>(params.cutout_min_frac) +
                  rng.next_double() * static_cast<double>(params.cutout_max_frac -
                                                          params.cutout_min_frac);
    double aspect = 0.5 + rng.next_double() * 1.5;
    double area = frac * static_cast<double>(h) * static_cast<double>(w);
    int64_t rw = std::clamp<int64_t>(std::lround(std::sqrt(area * aspect)), 1,
                                     static_cast<int64_t>(w));
    int64_t rh = std::clamp<int64_t>(
        std::lround(area / static_cast<double>(rw)), 1, static_cast<int64_t>(h));
    rec.cutout.h = static_cast<uint32_t>(rh);
    rec.cutout.w = static_cast<uint32_t>(rw);
    rec.cutout.y0 = static_cast<uint32_t>(
        rng.next_below(static_cast<uint64_t>(h - rec.cutout.h + 1)));
    rec.cutout.x0 = static_cast<uint32_t>(
        rng.next_below(static_cast<uint64_t>(w - rec.cutout.w + 1)));
    return rec;
}

TensorF apply_augmentation(const TensorF& image, const AugRecord& rec, SeededRng& rng) {
    if (image.rank() != 3 || image.dim(0) != 1)
        throw std::invalid_argument("expected a (1,h,w) image");
    const uint32_t h = image.dim(1), w = image.dim(2);
    TensorF out({1, h, w});
    for (uint32_t y = 0; y < h; ++y) {
        for (uint32_t x = 0; x < w; ++x) {
            auto [sy, sx] = source_index(rec, h, w, y, x);
            out(0, y, x) = sy < 0 ? 0.f
                                  : image(0, static_cast<uint32_t>(sy),
                                          static_cast<uint32_t>(sx));
        }
    }
    if (rec.kind == AugKind::strong) {
        for (float& v : out.flat()) {
            float n = rec.noise_sigma > 0.f
                          ? rec.noise_sigma * static_cast<float>(rng.next_normal())
                          : 0.f;
            v = std::clamp(v + rec.jitter + n, 0.f, 1.f);
        }
        const CutoutRect& r = rec.cutout;
        for (uint32_t y = r.y0; y < r.y0 + r.h; ++y)
            for (uint32_t x = r.x0; x < r.x0 + r.w; ++x) out(0, y, x) = 0.f;
    }
    return out;
}

LabelField transform_label(const LabelField& label, const AugRecord& rec) {
    const uint32_t h = label.height(), w = label.width();
    LabelField out = label.kind == TaskKind::multi_class
                         ? LabelField::make_multi_class(label.num_classes, h, w)
                         : LabelField::make_multi_label(label.num_classes, h, w);
    out.ensure_decided_mask();

    // An undecided source stays undecided after the move.
    const bool src_has_mask = !label.all_decided();
    for (uint32_t y = 0; y < h; ++y) {
        for (uint32_t x = 0; x < w; ++x) {
            auto [sy, sx] = source_index(rec, h, w, y, x);
            if (sy < 0) {
                if (out.kind == TaskKind::multi_class) {
                    out.decided(y, x) = 0;
                } else {
                    for (int j = 0; j < out.num_classes; ++j)
                        out.decided(static_cast<uint32_t>(j), y, x) = 0;
                }
                continue;
            }
            uint32_t uy = static_cast<uint32_t>(sy), ux = static_cast<uint32_t>(sx);
            if (out.kind == TaskKind::multi_class) {
                out.values(y, x) = label.values(uy, ux);
                out.decided(y, x) = src_has_mask ? label.decided(uy, ux) : uint8_t{1};
            } else {
                for (int j = 0; j < out.num_classes; ++j) {
                    uint32_t jc = static_cast<uint32_t>(j);
                    out.values(jc, y, x) = label.values(jc, uy, ux);
                    out.decided(jc, y, x) =
                        src_has_mask ? label.decided(jc, uy, ux) : uint8_t{1};
                }
            }
        }
    }
    // A lossless move (flip only, decided source) needs no mask at all.
    bool all = true;
    for (uint8_t v : out.decided.flat())
        if (!v) {
            all = false;
            break;
        }
    if (all) out.decided = TensorU8();
    return out;
}

}  // namespace refseg
