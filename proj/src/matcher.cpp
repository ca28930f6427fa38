#include "refseg/matcher.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "refseg/parallel.hpp"

namespace refseg {

namespace {

constexpr float kNormEps = 1e-8f;
constexpr double kProbEps = 1e-8;

// Block sizes for the tiled distance kernel. Pixels are transposed into
// contiguous rows; references are walked in row order so accumulation stays
// j-ascending per (pixel, reference) pair, matching clipped_cosine exactly.
constexpr size_t kPixelBlock = 32;
constexpr size_t kRefBlock = 64;

struct MatchContext {
    const ReferencePool* refs;
    int categories;
    double inv_log_c;
    int k;
};

// Packs (distance, row) into one integer so the (distance ascending, row
// ascending) order becomes a single integer compare. The sign-dependent XOR
// maps float order onto unsigned order for every finite value; rounding can
// push a distance a hair below zero, so plain bit order would not do.
inline uint64_t pack_key(float dist, uint32_t row) {
    uint32_t u = std::bit_cast<uint32_t>(dist);
    u ^= (u >> 31) ? 0xFFFFFFFFu : 0x80000000u;
    return (static_cast<uint64_t>(u) << 32) | row;
}
inline float key_dist(uint64_t key) {
    uint32_t u = static_cast<uint32_t>(key >> 32);
    u ^= (u >> 31) ? 0x80000000u : 0xFFFFFFFFu;
    return std::bit_cast<float>(u);
}
inline uint32_t key_row(uint64_t key) { return static_cast<uint32_t>(key); }

void check_inputs(const FeatureMap& query, const ReferencePool& refs) {
    if (query.rank() != 3) throw std::invalid_argument("query must be (d,h,w)");
    if (refs.count() == 0) throw std::invalid_argument("reference set is empty");
    if (static_cast<int>(query.dim(0)) != refs.dim())
        throw std::invalid_argument("query feature dim " +
                                    std::to_string(query.dim(0)) +
                                    " != reference dim " + std::to_string(refs.dim()));
    if (category_count(refs.task, refs.num_classes) < 2)
        throw std::invalid_argument("entropy weights need at least 2 categories");
}

PseudoLabelResult make_result(const FeatureMap& query, const ReferencePool& refs,
                              const PoolConfig& cfg, MatchContext& ctx) {
    const uint32_t h = query.dim(1), w = query.dim(2);
    PseudoLabelResult out;
    out.labels = refs.task == TaskKind::multi_class
                     ? LabelField::make_multi_class(refs.num_classes, h, w)
                     : LabelField::make_multi_label(refs.num_classes, h, w);
    out.weights = TensorF({h, w});
    out.nearest_distance = TensorF({h, w});
    ctx.refs = &refs;
    ctx.categories = category_count(refs.task, refs.num_classes);
    ctx.inv_log_c = 1.0 / std::log(static_cast<double>(ctx.categories));
    out.class_distances = TensorF({static_cast<uint32_t>(ctx.categories), h, w});
    bool clamped = false;
    ctx.k = resolve_neighbor_count(cfg, refs.count(), clamped);
    out.k_used = ctx.k;
    out.k_clamped = clamped;
    return out;
}

/// delta -> entropy weight. All probability math in double; the clamp
/// absorbs rounding at the W=0 and W=1 ends.
float entropy_weight_scaled(const float* delta, int categories, double inv_log_c) {
    double sum = 0.0;
    for (int j = 0; j < categories; ++j)
        sum += 1.0 - static_cast<double>(delta[j]) + kProbEps;
    double entropy = 0.0;
    for (int j = 0; j < categories; ++j) {
        double p = (1.0 - static_cast<double>(delta[j]) + kProbEps) / sum;
        entropy += p * std::log(p);
    }
    double wgt = 1.0 + entropy * inv_log_c;
    return static_cast<float>(std::clamp(wgt, 0.0, 1.0));
}

/// Scans the k packed (distance, row) keys of one pixel and fills its
/// outputs. Assumes keys holds the k smallest by (distance, row); best is
/// the global minimum under the same order.
void finalize_pixel(const MatchContext& ctx, size_t pixel, uint32_t w,
                    float best_dist, uint32_t best_row, const uint64_t* keys,
                    int key_count, PseudoLabelResult& out, float* delta_scratch) {
    const ReferencePool& refs = *ctx.refs;
    const uint32_t y = static_cast<uint32_t>(pixel / w);
    const uint32_t x = static_cast<uint32_t>(pixel % w);

    out.nearest_distance(y, x) = best_dist;
    out.labels.set_code(y, x, refs.labels[best_row]);

    for (int j = 0; j < ctx.categories; ++j) delta_scratch[j] = 1.f;
    for (int i = 0; i < key_count; ++i) {
        uint32_t mask = refs.category_masks[key_row(keys[i])];
        float d = key_dist(keys[i]);
        while (mask) {
            int j = std::countr_zero(mask);
            mask &= mask - 1;
            if (d < delta_scratch[j]) delta_scratch[j] = d;
        }
    }
    for (int j = 0; j < ctx.categories; ++j)
        out.class_distances(static_cast<uint32_t>(j), y, x) = delta_scratch[j];
    out.weights(y, x) =
        entropy_weight_scaled(delta_scratch, ctx.categories, ctx.inv_log_c);
}

}  // namespace

float entropy_weight(const float* class_distances, int categories) {
    if (categories < 2)
        throw std::invalid_argument("entropy weights need at least 2 categories");
    return entropy_weight_scaled(class_distances, categories,
                                 1.0 / std::log(static_cast<double>(categories)));
}

float clipped_cosine(const float* a, const float* b, size_t d) {
    float dot = 0.f, na = 0.f, nb = 0.f;
    for (size_t j = 0; j < d; ++j) {
        dot += a[j] * b[j];
        na += a[j] * a[j];
        nb += b[j] * b[j];
    }
    float cos = dot / (std::sqrt(na) * std::sqrt(nb) + kNormEps);
    if (cos < 0.f) cos = 0.f;
    return 1.f - cos;
}

PseudoLabelResult assign_labels(const FeatureMap& query, const ReferencePool& refs,
                                const PoolConfig& cfg) {
    check_inputs(query, refs);
    MatchContext ctx;
    PseudoLabelResult out = make_result(query, refs, cfg, ctx);

    const uint32_t d = query.dim(0), h = query.dim(1), w = query.dim(2);
    const size_t n = static_cast<size_t>(h) * w;
    const size_t m = refs.count();
    const size_t plane = n;

    // Multi-class references get regrouped by category so each per-category
    // minimum runs over a contiguous range. Keys still carry original row
    // ids, so every comparison, and with it every tie, is order-independent.
    // Multi-label rows can sit in several categories at once; those keep the
    // original order and the per-pixel selection path below.
    const bool by_category = refs.task == TaskKind::multi_class;
    std::vector<uint32_t> order(m);
    std::vector<size_t> cat_begin;
    if (by_category) {
        cat_begin.assign(static_cast<size_t>(ctx.categories) + 1, 0);
        for (size_t r = 0; r < m; ++r)
            ++cat_begin[static_cast<size_t>(std::countr_zero(refs.category_masks[r])) + 1];
        for (int j = 0; j < ctx.categories; ++j) cat_begin[j + 1] += cat_begin[j];
        std::vector<size_t> cursor(cat_begin.begin(), cat_begin.end() - 1);
        for (size_t r = 0; r < m; ++r) {
            int c = std::countr_zero(refs.category_masks[r]);
            order[cursor[static_cast<size_t>(c)]++] = static_cast<uint32_t>(r);
        }
    } else {
        for (size_t r = 0; r < m; ++r) order[r] = static_cast<uint32_t>(r);
    }

    // References transposed to (d, m) so the inner loop runs contiguously
    // over reference rows with one accumulator per row.
    std::vector<float> ref_t(static_cast<size_t>(d) * m);
    std::vector<float> norms_o(m);
    for (size_t r = 0; r < m; ++r) {
        const uint32_t src = order[r];
        norms_o[r] = refs.norms[src];
        for (uint32_t j = 0; j < d; ++j)
            ref_t[static_cast<size_t>(j) * m + r] = refs.vectors(src, j);
    }

    const float* qdata = query.data();
    const size_t blocks = (n + kPixelBlock - 1) / kPixelBlock;

    parallel_for(blocks, [&](size_t b0, size_t b1) {
        std::vector<float> qblock(kPixelBlock * d);
        std::vector<float> qnorm(kPixelBlock);
        std::vector<float> dist(kPixelBlock * m);
        std::vector<float> acc(kPixelBlock * kRefBlock);
        std::vector<uint64_t> keys(m);
        std::vector<float> delta(static_cast<size_t>(ctx.categories));

        for (size_t blk = b0; blk < b1; ++blk) {
            const size_t p0 = blk * kPixelBlock;
            const size_t pcount = std::min(kPixelBlock, n - p0);

            for (size_t p = 0; p < pcount; ++p) {
                float sq = 0.f;
                for (uint32_t j = 0; j < d; ++j) {
                    float v = qdata[static_cast<size_t>(j) * plane + p0 + p];
                    qblock[p * d + j] = v;
                    sq += v * v;
                }
                qnorm[p] = std::sqrt(sq);
            }

            for (size_t r0 = 0; r0 < m; r0 += kRefBlock) {
                const size_t rcount = std::min(kRefBlock, m - r0);
                std::fill(acc.begin(), acc.begin() + pcount * kRefBlock, 0.f);
                for (uint32_t j = 0; j < d; ++j) {
                    const float* rrow = ref_t.data() + static_cast<size_t>(j) * m + r0;
                    for (size_t p = 0; p < pcount; ++p) {
                        const float qv = qblock[p * d + j];
                        float* arow = acc.data() + p * kRefBlock;
                        for (size_t r = 0; r < rcount; ++r) arow[r] += qv * rrow[r];
                    }
                }
                for (size_t p = 0; p < pcount; ++p) {
                    const float qn = qnorm[p];
                    const float* arow = acc.data() + p * kRefBlock;
                    const float* nrow = norms_o.data() + r0;
                    float* drow = dist.data() + p * m + r0;
                    for (size_t r = 0; r < rcount; ++r) {
                        float cos = arow[r] / (qn * nrow[r] + kNormEps);
                        drow[r] = 1.f - (cos > 0.f ? cos : 0.f);
                    }
                }
            }

            for (size_t p = 0; p < pcount; ++p) {
                const float* drow = dist.data() + p * m;
                for (size_t r = 0; r < m; ++r)
                    keys[r] = pack_key(drow[r], order[r]);

                if (by_category) {
                    uint64_t bestkey = keys[0];
                    for (size_t r = 1; r < m; ++r)
                        bestkey = keys[r] < bestkey ? keys[r] : bestkey;

                    // Per category, the closest reference overall is also the
                    // closest inside the k nearest whenever it makes the cut;
                    // counting strictly smaller keys decides the cut exactly.
                    for (int c = 0; c < ctx.categories; ++c) {
                        const size_t cb = cat_begin[static_cast<size_t>(c)];
                        const size_t ce = cat_begin[static_cast<size_t>(c) + 1];
                        if (cb == ce) {
                            delta[static_cast<size_t>(c)] = 1.f;
                            continue;
                        }
                        uint64_t mk = keys[cb];
                        for (size_t r = cb + 1; r < ce; ++r)
                            mk = keys[r] < mk ? keys[r] : mk;
                        size_t rank = 0;
                        for (size_t r = 0; r < m; ++r)
                            rank += keys[r] < mk ? size_t{1} : size_t{0};
                        delta[static_cast<size_t>(c)] =
                            rank < static_cast<size_t>(ctx.k) ? key_dist(mk) : 1.f;
                    }

                    const size_t pixel = p0 + p;
                    const uint32_t y = static_cast<uint32_t>(pixel / w);
                    const uint32_t x = static_cast<uint32_t>(pixel % w);
                    out.nearest_distance(y, x) = key_dist(bestkey);
                    out.labels.set_code(y, x, refs.labels[key_row(bestkey)]);
                    for (int c = 0; c < ctx.categories; ++c)
                        out.class_distances(static_cast<uint32_t>(c), y, x) =
                            delta[static_cast<size_t>(c)];
                    out.weights(y, x) =
                        entropy_weight_scaled(delta.data(), ctx.categories, ctx.inv_log_c);
                    continue;
                }

                float best = drow[0];
                uint32_t best_row = 0;
                for (size_t r = 1; r < m; ++r) {
                    if (drow[r] < best) {
                        best = drow[r];
                        best_row = static_cast<uint32_t>(r);
                    }
                }
                int key_count = static_cast<int>(m);
                if (static_cast<size_t>(ctx.k) < m) {
                    std::nth_element(keys.begin(), keys.begin() + ctx.k, keys.end());
                    key_count = ctx.k;
                }
                finalize_pixel(ctx, p0 + p, w, best, best_row, keys.data(),
                               key_count, out, delta.data());
            }
        }
    });
    return out;
}

PseudoLabelResult brute_force_oracle(const FeatureMap& query, const ReferencePool& refs,
                                     const PoolConfig& cfg) {
    check_inputs(query, refs);
    MatchContext ctx;
    PseudoLabelResult out = make_result(query, refs, cfg, ctx);

    const uint32_t d = query.dim(0), h = query.dim(1), w = query.dim(2);
    const size_t n = static_cast<size_t>(h) * w;
    const size_t m = refs.count();

    // One scalar dot per (pixel, reference) pair, nothing blocked or tiled.
    // Norms come from the pool, where they are accumulated in the same
    // feature order clipped_cosine uses, so the distances are the exact
    // values the definition gives. Packed keys are pairwise distinct (the
    // row index breaks ties), so the k smallest under nth_element are the
    // same set a full sort would put in front.
    parallel_for(n, [&](size_t p0, size_t p1) {
        std::vector<float> qvec(d);
        std::vector<uint64_t> order(m);
        std::vector<float> delta(static_cast<size_t>(ctx.categories));

        for (size_t p = p0; p < p1; ++p) {
            float sq = 0.f;
            for (uint32_t j = 0; j < d; ++j) {
                float v = query.data()[static_cast<size_t>(j) * n + p];
                qvec[j] = v;
                sq += v * v;
            }
            const float qn = std::sqrt(sq);
            for (size_t r = 0; r < m; ++r) {
                const float* row = &refs.vectors(static_cast<uint32_t>(r), 0);
                float dot = 0.f;
                for (uint32_t j = 0; j < d; ++j) dot += qvec[j] * row[j];
                float cos = dot / (qn * refs.norms[r] + kNormEps);
                if (cos < 0.f) cos = 0.f;
                order[r] = pack_key(1.f - cos, static_cast<uint32_t>(r));
            }
            uint64_t best = *std::min_element(order.begin(), order.end());
            if (static_cast<size_t>(ctx.k) < m)
                std::nth_element(order.begin(), order.begin() + ctx.k, order.end());
            finalize_pixel(ctx, p, w, key_dist(best), key_row(best), order.data(),
                           ctx.k, out, delta.data());
        }
    });
    return out;
}

}  // namespace refseg
