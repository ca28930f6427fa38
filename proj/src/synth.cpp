#include "refseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace refseg {

namespace {

enum class ShapeKind { disk, rectangle, ring };

struct ShapeDraw {
    ShapeKind kind;
    int fg_class;  // 0..foreground_classes-1
    float cy, cx;
    float ry, rx;      // half extents / radii in pixels
    float inner_frac;  // rings only
};

struct ClassLook {
    float base;      // base intensity
    int texture;     // 0 = checker, 1 = h-stripes, 2 = v-stripes
    float amp;       // texture amplitude
    int period;      // texture period in pixels
};

ClassLook class_look(const SceneSpec& spec, int fg_class) {
    int n = std::max(1, spec.foreground_classes());
    float t = n > 1 ? static_cast<float>(fg_class) / static_cast<float>(n - 1) : 0.f;
    ClassLook look;
    look.base = 0.35f + 0.50f * t;
    look.texture = fg_class % 3;
    look.amp = spec.texture_amp;
    look.period = 2 + (fg_class / 3) % 2;
    return look;
}

float texture_value(const ClassLook& look, uint32_t y, uint32_t x, uint32_t phase_y,
                    uint32_t phase_x) {
    uint32_t py = (y + phase_y) / static_cast<uint32_t>(look.period);
    uint32_t px = (x + phase_x) / static_cast<uint32_t>(look.period);
    uint32_t cell = 0;
    switch (look.texture) {
        case 0: cell = (py + px) & 1u; break;
        case 1: cell = py & 1u; break;
        default: cell = px & 1u; break;
    }
    return (cell ? 0.5f : -0.5f) * look.amp;
}

bool inside(const ShapeDraw& s, uint32_t y, uint32_t x) {
    float dy = (static_cast<float>(y) - s.cy) / s.ry;
    float dx = (static_cast<float>(x) - s.cx) / s.rx;
    switch (s.kind) {
        case ShapeKind::disk:
            return dy * dy + dx * dx <= 1.f;
        case ShapeKind::rectangle:
            return std::abs(dy) <= 1.f && std::abs(dx) <= 1.f;
        case ShapeKind::ring: {
            float r2 = dy * dy + dx * dx;
            return r2 <= 1.f && r2 >= s.inner_frac * s.inner_frac;
        }
    }
    return false;
}

constexpr float kBackgroundBase = 0.12f;

Sample generate_scene_impl(const SceneSpec& spec, SeededRng& rng) {
    const uint32_t h = spec.height, w = spec.width;
    const int n_fg = spec.foreground_classes();
    const float side = static_cast<float>(std::min(h, w));

    int n_shapes = spec.min_shapes +
                   static_cast<int>(rng.next_below(
                       static_cast<uint64_t>(spec.max_shapes - spec.min_shapes + 1)));
    n_shapes = std::max(n_shapes, 1);

    // Cycle a fresh permutation of the foreground classes through the shapes so
    // a single image covers as many classes as its shape count allows.
    std::vector<int> order(static_cast<size_t>(n_fg));
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.next_below(i)]);

    std::vector<ShapeDraw> shapes;
    shapes.reserve(static_cast<size_t>(n_shapes));
    for (int i = 0; i < n_shapes; ++i) {
        ShapeDraw s;
        s.kind = static_cast<ShapeKind>(rng.next_below(3));
        s.fg_class = order[static_cast<size_t>(i) % order.size()];
        s.cy = static_cast<float>(rng.next_double()) * static_cast<float>(h - 1);
        s.cx = static_cast<float>(rng.next_double()) * static_cast<float>(w - 1);
        float lo = spec.min_radius_frac * side, hi = spec.max_radius_frac * side;
        s.ry = lo + static_cast<float>(rng.next_double()) * (hi - lo);
        s.rx = lo + static_cast<float>(rng.next_double()) * (hi - lo);
        s.inner_frac = 0.45f + 0.25f * static_cast<float>(rng.next_double());
        shapes.push_back(s);
    }

    uint32_t phase_y = static_cast<uint32_t>(rng.next_below(64));
    uint32_t phase_x = static_cast<uint32_t>(rng.next_below(64));
    float brightness =
        (2.f * static_cast<float>(rng.next_double()) - 1.f) * spec.brightness_jitter;

    Sample out;
    out.image = TensorF({1, h, w});
    out.label = spec.task == TaskKind::multi_class
                    ? LabelField::make_multi_class(spec.num_classes, h, w)
                    : LabelField::make_multi_label(spec.num_classes, h, w);

    for (uint32_t y = 0; y < h; ++y) {
        for (uint32_t x = 0; x < w; ++x) {
            float value = kBackgroundBase;
            if (spec.task == TaskKind::multi_class) {
                // Painter's order: the last drawn shape owns the pixel.
                int owner = -1;
                for (size_t i = 0; i < shapes.size(); ++i)
                    if (inside(shapes[i], y, x)) owner = static_cast<int>(i);
                if (owner >= 0) {
                    const auto& s = shapes[static_cast<size_t>(owner)];
                    ClassLook look = class_look(spec, s.fg_class);
                    value = look.base + texture_value(look, y, x, phase_y, phase_x);
                    out.label.values(y, x) = static_cast<uint8_t>(s.fg_class + 1);
                }
            } else {
                // Transparent composition: covering shapes add up, every
                // covering class sets its bit.
                for (const auto& s : shapes) {
                    if (!inside(s, y, x)) continue;
                    ClassLook look = class_look(spec, s.fg_class);
                    value += 0.55f * look.base + texture_value(look, y, x, phase_y, phase_x);
                    out.label.values(static_cast<uint32_t>(s.fg_class), y, x) = 1;
                }
            }
            out.image(0, y, x) = value + brightness;
        }
    }

    for (float& v : out.image.flat()) {
        v += spec.noise_sigma * static_cast<float>(rng.next_normal());
        v = std::clamp(v, 0.f, 1.f);
    }
    return out;
}

}  // namespace

Sample generate_scene(const SceneSpec& spec, SeededRng rng) {
    return generate_scene_impl(spec, rng);
}

uint32_t covered_categories(const LabelField& label) {
    uint32_t mask = 0;
    const uint32_t h = label.height(), w = label.width();
    for (uint32_t y = 0; y < h; ++y)
        for (uint32_t x = 0; x < w; ++x)
            mask |= category_mask(label.kind, label.num_classes, label.code_at(y, x));
    return mask;
}

uint32_t required_categories(TaskKind task, int num_classes) {
    return (uint32_t{1} << category_count(task, num_classes)) - 1;
}

Dataset generate_dataset(const SceneSpec& spec, const SeededRng& rng, int n_labeled,
                         int n_unlabeled, int n_val, int n_test) {
    if (n_labeled < 1)
        throw std::invalid_argument("n_labeled must be >= 1");
    if (n_unlabeled < 0 || n_val < 0 || n_test < 0)
        throw std::invalid_argument("split sizes must be >= 0");
    check_class_count(spec.task, spec.num_classes);

    Dataset ds;
    ds.task = spec.task;
    ds.num_classes = spec.num_classes;

    const uint32_t required = required_categories(spec.task, spec.num_classes);
    SceneSpec labeled_spec = spec;
    labeled_spec.brightness_jitter *= spec.labeled_jitter_frac;
    bool covered = false;
    for (int attempt = 0; attempt < spec.coverage_retries && !covered; ++attempt) {
        ds.labeled.clear();
        auto split_rng = rng.derive("labeled-attempt-" + std::to_string(attempt));
        uint32_t mask = 0;
        for (int i = 0; i < n_labeled; ++i) {
            ds.labeled.push_back(
                generate_scene(labeled_spec, split_rng.derive("img-" + std::to_string(i))));
            mask |= covered_categories(ds.labeled.back().label);
        }
        covered = (mask & required) == required;
    }
    if (!covered)
        throw CoverageError("labeled split cannot cover all " +
                            std::to_string(category_count(spec.task, spec.num_classes)) +
                            " categories after " + std::to_string(spec.coverage_retries) +
                            " attempts (" + std::to_string(n_labeled) + " images, " +
                            std::to_string(spec.max_shapes) + " shapes max)");

    auto gen_split = [&](const char* name, int count, std::vector<Sample>& out) {
        auto split_rng = rng.derive(name);
        out.reserve(static_cast<size_t>(count));
        for (int i = 0; i < count; ++i)
            out.push_back(generate_scene(spec, split_rng.derive("img-" + std::to_string(i))));
    };

    {
        auto split_rng = rng.derive("unlabeled");
        ds.unlabeled.reserve(static_cast<size_t>(n_unlabeled));
        for (int i = 0; i < n_unlabeled; ++i)
            ds.unlabeled.push_back(
                generate_scene(spec, split_rng.derive("img-" + std::to_string(i))).image);
    }
    gen_split("validation", n_val, ds.validation);
    gen_split("test", n_test, ds.test);
    return ds;
}

}  // namespace refseg
