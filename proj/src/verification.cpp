#include "refseg/verification.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "refseg/matcher.hpp"
#include "refseg/pool.hpp"
#include "refseg/rng.hpp"

namespace refseg {

namespace {

constexpr uint32_t kQuerySide = 64;
constexpr uint32_t kDim = 16;

TensorF random_vectors(uint32_t rows, uint32_t cols, SeededRng& rng) {
    TensorF t({rows, cols});
    for (float& v : t.flat()) v = static_cast<float>(rng.next_normal());
    return t;
}

}  // namespace

OracleSuiteResult run_oracle_suite(int cases, uint64_t seed, std::ostream* progress) {
    const uint32_t m_grid[] = {1000, 5000, 12288};
    const int c_grid[] = {2, 3, 5};

    OracleSuiteResult result;
    result.cases = cases;

    for (int case_id = 0; case_id < cases; ++case_id) {
        SeededRng rng = SeededRng(seed).derive("case-" + std::to_string(case_id));
        const uint32_t m = m_grid[case_id % 3];
        const int categories = c_grid[(case_id / 3) % 3];
        const TaskKind task =
            (case_id / 9) % 2 == 0 ? TaskKind::multi_class : TaskKind::multi_label;
        // Multi-label categories count the background, so c classes give c+1.
        const int classes = task == TaskKind::multi_class ? categories : categories - 1;
        if (task == TaskKind::multi_label && classes < 1) continue;

        PoolConfig cfg;
        switch ((case_id / 18) % 4) {
            case 0: cfg.neighbor_count = 1; break;
            case 1: cfg.neighbor_fraction = 0.10; break;
            case 2: cfg.neighbor_fraction = 0.50; break;
            case 3: cfg.neighbor_count = static_cast<int>(m); break;
        }

        TensorF vectors = random_vectors(m, kDim, rng);
        // Duplicate rows create exact distance ties.
        for (uint32_t j = 0; j < kDim; ++j) {
            vectors(5, j) = vectors(6, j);
            if (m > 100) vectors(100, j) = vectors(6, j);
        }
        std::vector<LabelCode> labels(m);
        for (uint32_t r = 0; r < m; ++r) {
            if (task == TaskKind::multi_class) {
                labels[r] = static_cast<LabelCode>(
                    rng.next_below(static_cast<uint64_t>(classes)));
            } else {
                LabelCode code = 0;
                for (int b = 0; b < classes; ++b)
                    if (rng.next_double() < 0.5) code |= LabelCode{1} << b;
                labels[r] = code;
            }
        }
        ReferencePool refs =
            make_reference_pool(std::move(vectors), std::move(labels), task, classes);

        TensorF query({kDim, kQuerySide, kQuerySide});
        for (float& v : query.flat()) v = static_cast<float>(rng.next_normal());
        // Planted extremes: an exact copy of a reference (zero distance, tied
        // between the duplicate rows), its negation (fully clipped), and a
        // zero vector (epsilon-guarded norm).
        const size_t plane = static_cast<size_t>(kQuerySide) * kQuerySide;
        for (uint32_t j = 0; j < kDim; ++j) {
            query.data()[j * plane + 0] = refs.vectors(6, j);
            query.data()[j * plane + 1] = -refs.vectors(6, j);
            query.data()[j * plane + 2] = 0.f;
        }

        PseudoLabelResult fast = assign_labels(query, refs, cfg);
        PseudoLabelResult slow = brute_force_oracle(query, refs, cfg);

        for (uint32_t y = 0; y < kQuerySide; ++y)
            for (uint32_t x = 0; x < kQuerySide; ++x) {
                if (fast.labels.code_at(y, x) != slow.labels.code_at(y, x))
                    ++result.label_mismatches;
                double dev = std::abs(static_cast<double>(fast.weights(y, x)) -
                                      static_cast<double>(slow.weights(y, x)));
                result.max_weight_deviation =
                    std::max(result.max_weight_deviation, dev);
            }

        if (progress && (case_id + 1) % 20 == 0)
            *progress << "oracle suite: " << (case_id + 1) << "/" << cases
                      << " cases, mismatches " << result.label_mismatches
                      << ", max weight dev " << result.max_weight_deviation
                      << std::endl;
    }
    return result;
}

}  // namespace refseg
