#include "refseg/pool.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "refseg/synth.hpp"

namespace refseg {

namespace {

uint32_t union_coverage(const std::vector<const LabelField*>& labeled,
                        const std::vector<uint32_t>& picks) {
    uint32_t mask = 0;
    for (uint32_t i : picks) mask |= covered_categories(*labeled[i]);
    return mask;
}

std::vector<uint32_t> draw_uniform(size_t n, int pool_size, SeededRng& rng) {
    std::vector<uint32_t> picks;
    picks.reserve(static_cast<size_t>(pool_size));
    if (n >= static_cast<size_t>(pool_size)) {
        // Partial Fisher-Yates over an index vector: without replacement.
        std::vector<uint32_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0u);
        for (int t = 0; t < pool_size; ++t) {
            size_t j = static_cast<size_t>(t) +
                       static_cast<size_t>(rng.next_below(static_cast<uint64_t>(n - static_cast<size_t>(t))));
            std::swap(idx[static_cast<size_t>(t)], idx[j]);
            picks.push_back(idx[static_cast<size_t>(t)]);
        }
    } else {
        for (int t = 0; t < pool_size; ++t)
            picks.push_back(static_cast<uint32_t>(rng.next_below(static_cast<uint64_t>(n))));
    }
    return picks;
}

}  // namespace

std::vector<uint32_t> sample_pool(const std::vector<const LabelField*>& labeled,
                                  int pool_size, SeededRng& rng, int max_retries) {
    if (labeled.empty()) throw std::invalid_argument("labeled split is empty");
    if (pool_size < 1) throw std::invalid_argument("pool_size must be >= 1");

    std::vector<uint32_t> per_image(labeled.size());
    uint32_t required = 0;
    for (size_t i = 0; i < labeled.size(); ++i) {
        per_image[i] = covered_categories(*labeled[i]);
        required |= per_image[i];
    }

    std::vector<uint32_t> picks;
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        picks = draw_uniform(labeled.size(), pool_size, rng);
        if ((union_coverage(labeled, picks) & required) == required) return picks;
    }

    // Greedy cover, deterministic: repeatedly take the image adding the most
    // missing categories (lowest index on ties), then fill leftover slots
    // uniformly from the images not yet chosen.
    picks.clear();
    std::vector<char> used(labeled.size(), 0);
    uint32_t covered = 0;
    while ((covered & required) != required &&
           picks.size() < static_cast<size_t>(pool_size)) {
        size_t best = labeled.size();
        int best_gain = 0;
        for (size_t i = 0; i < labeled.size(); ++i) {
            if (used[i]) continue;
            int gain = std::popcount(per_image[i] & required & ~covered);
            if (gain > best_gain) {
                best_gain = gain;
                best = i;
            }
        }
        if (best == labeled.size()) break;
        picks.push_back(static_cast<uint32_t>(best));
        used[best] = 1;
        covered |= per_image[best];
    }
    if ((covered & required) != required)
        throw PoolCoverageError("pool of " + std::to_string(pool_size) +
                                " images cannot cover all categories present in the "
                                "labeled split; increase pool_size");
    while (picks.size() < static_cast<size_t>(pool_size)) {
        std::vector<uint32_t> free;
        for (size_t i = 0; i < labeled.size(); ++i)
            if (!used[i]) free.push_back(static_cast<uint32_t>(i));
        if (free.empty()) {
            picks.push_back(static_cast<uint32_t>(
                rng.next_below(static_cast<uint64_t>(labeled.size()))));
        } else {
            uint32_t pick = free[static_cast<size_t>(
                rng.next_below(static_cast<uint64_t>(free.size())))];
            picks.push_back(pick);
            used[pick] = 1;
        }
    }
    return picks;
}

std::vector<uint32_t> subsample_indices(uint32_t extent, int side) {
    if (extent == 0) throw std::invalid_argument("extent must be positive");
    if (side < 1) throw std::invalid_argument("subsample side must be >= 1");
    std::vector<uint32_t> idx(static_cast<size_t>(side));
    for (int i = 0; i < side; ++i) {
        double center = (static_cast<double>(i) + 0.5) * static_cast<double>(extent) /
                        static_cast<double>(side);
        uint32_t src = static_cast<uint32_t>(center);
        idx[static_cast<size_t>(i)] = std::min(src, extent - 1);
    }
    return idx;
}

ReferencePool build_reference_set(const std::vector<const FeatureMap*>& features,
                                  const std::vector<const LabelField*>& labels,
                                  const std::vector<uint32_t>& pool,
                                  const PoolConfig& cfg) {
    if (features.size() != labels.size())
        throw std::invalid_argument("feature/label count mismatch");
    if (pool.empty()) throw std::invalid_argument("pool is empty");
    for (uint32_t i : pool)
        if (i >= features.size())
            throw std::invalid_argument("pool index " + std::to_string(i) +
                                        " out of range");

    const FeatureMap& first = *features[pool[0]];
    if (first.rank() != 3) throw std::invalid_argument("feature maps must be (d,h,w)");
    const uint32_t d = first.dim(0), h = first.dim(1), w = first.dim(2);
    for (uint32_t i : pool) {
        if (!features[i]->same_shape(first))
            throw std::invalid_argument("feature maps in a pool must share a shape");
        if (labels[i]->height() != h || labels[i]->width() != w)
            throw std::invalid_argument("label map size disagrees with features");
    }

    ReferencePool out;
    out.task = labels[pool[0]]->kind;
    out.num_classes = labels[pool[0]]->num_classes;
    int side = std::min<int>(cfg.subsample_side,
                             static_cast<int>(std::min(h, w)));
    out.s_clamped = side != cfg.subsample_side;
    out.s_used = side;

    auto ys = subsample_indices(h, side);
    auto xs = subsample_indices(w, side);
    const size_t m = pool.size() * ys.size() * xs.size();
    out.vectors = TensorF({static_cast<uint32_t>(m), d});
    out.labels.reserve(m);
    out.category_masks.reserve(m);
    out.norms.reserve(m);
    out.sources.reserve(m);

    size_t row = 0;
    for (uint32_t img : pool) {
        const FeatureMap& f = *features[img];
        const LabelField& lab = *labels[img];
        for (uint32_t y : ys) {
            for (uint32_t x : xs) {
                float* dst = &out.vectors(static_cast<uint32_t>(row), 0);
                float sq = 0.f;
                for (uint32_t dd = 0; dd < d; ++dd) {
                    float v = f(dd, y, x);
                    dst[dd] = v;
                    sq += v * v;
                }
                out.norms.push_back(std::sqrt(sq));
                LabelCode code = lab.code_at(y, x);
                out.labels.push_back(code);
                out.category_masks.push_back(
                    category_mask(lab.kind, lab.num_classes, code));
                out.sources.push_back({img, y, x});
                ++row;
            }
        }
    }
    return out;
}

ReferencePool make_reference_pool(TensorF vectors, std::vector<LabelCode> labels,
                                  TaskKind task, int num_classes) {
    if (vectors.rank() != 2) throw std::invalid_argument("vectors must be (M,d)");
    if (vectors.dim(0) != labels.size())
        throw std::invalid_argument("vector/label count mismatch");
    if (labels.empty()) throw std::invalid_argument("reference set is empty");
    check_class_count(task, num_classes);

    ReferencePool out;
    out.task = task;
    out.num_classes = num_classes;
    const uint32_t m = vectors.dim(0), d = vectors.dim(1);
    out.norms.reserve(m);
    out.category_masks.reserve(m);
    out.sources.reserve(m);
    for (uint32_t r = 0; r < m; ++r) {
        float sq = 0.f;
        const float* row = &vectors(r, 0);
        for (uint32_t j = 0; j < d; ++j) sq += row[j] * row[j];
        out.norms.push_back(std::sqrt(sq));
        out.category_masks.push_back(category_mask(task, num_classes, labels[r]));
        out.sources.push_back({0, r, 0});
    }
    out.vectors = std::move(vectors);
    out.labels = std::move(labels);
    out.s_used = 0;
    return out;
}

int resolve_neighbor_count(const PoolConfig& cfg, size_t m, bool& clamped) {
    if (m == 0) throw std::invalid_argument("reference set is empty");
    long long k;
    if (cfg.neighbor_fraction > 0.0) {
        if (cfg.neighbor_fraction >= 1.0)
            throw std::invalid_argument("neighbor_fraction must be in (0, 1)");
        k = static_cast<long long>(
            std::floor(cfg.neighbor_fraction * static_cast<double>(m)));
        if (k < 1) k = 1;
    } else {
        k = cfg.neighbor_count;
        if (k < 1) throw std::invalid_argument("neighbor_count must be >= 1");
    }
    clamped = k > static_cast<long long>(m);
    if (clamped) k = static_cast<long long>(m);
    return static_cast<int>(k);
}

}  // namespace refseg
