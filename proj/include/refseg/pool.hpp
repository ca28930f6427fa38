#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "refseg/labels.hpp"
#include "refseg/model.hpp"
#include "refseg/rng.hpp"
#include "refseg/tensor.hpp"

namespace refseg {

struct PoolConfig {
    int pool_size = 3;        // images drawn per training iteration
    int subsample_side = 64;  // s; clamped to the image side when larger
    /// Neighbors per query pixel. Exactly one of the two is active:
    /// neighbor_fraction > 0 means k = floor(fraction * reference count).
    int neighbor_count = 7000;
    double neighbor_fraction = 0.0;
};

/// Drawn pool cannot cover every category.
class PoolCoverageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Where a reference vector came from, for logs and inspection.
struct PixelRef {
    uint32_t image = 0;  // index into the labeled split
    uint32_t y = 0, x = 0;
};

/// Subsampled labeled pixels the matcher scores queries against. Row j holds
/// the feature vector of sources[j]; rows are ordered pool-image major, then
/// row-major over the subsample grid. Everything per-row is index-aligned.
struct ReferencePool {
    TensorF vectors;                       // (M,d)
    std::vector<LabelCode> labels;         // M packed label codes
    std::vector<uint32_t> category_masks;  // M, category_mask of each label
    std::vector<float> norms;              // M Euclidean norms
    std::vector<PixelRef> sources;         // M
    TaskKind task = TaskKind::multi_class;
    int num_classes = 0;
    int s_used = 0;
    bool s_clamped = false;

    size_t count() const { return labels.size(); }
    int dim() const { return vectors.size() == 0 ? 0 : static_cast<int>(vectors.dim(1)); }
};

/// Uniform draw of pool_size labeled image indices, without replacement (with
/// replacement when fewer images than slots exist). Redraws until the pool
/// covers every category present across the labeled split, up to max_retries
/// attempts; after that a deterministic greedy cover takes over. Throws
/// PoolCoverageError when even greedy selection cannot cover in pool_size
/// slots.
std::vector<uint32_t> sample_pool(const std::vector<const LabelField*>& labeled,
                                  int pool_size, SeededRng& rng, int max_retries = 100);

/// Nearest-neighbor grid: src(i) = floor((i + 0.5) * extent / side).
std::vector<uint32_t> subsample_indices(uint32_t extent, int side);

/// Gathers the subsampled feature vectors and labels of the pool images. All
/// feature maps must share (d,h,w); labels must match the maps' spatial size.
ReferencePool build_reference_set(const std::vector<const FeatureMap*>& features,
                                  const std::vector<const LabelField*>& labels,
                                  const std::vector<uint32_t>& pool,
                                  const PoolConfig& cfg);

/// Active neighbor count for a reference set of m rows; clamps to m and
/// reports whether clamping happened. Fractional counts floor to at least 1.
int resolve_neighbor_count(const PoolConfig& cfg, size_t m, bool& clamped);

/// Wraps raw (M,d) vectors and M label codes as a ReferencePool, computing
/// norms and category masks. Sources are synthesized as image 0, row-major.
ReferencePool make_reference_pool(TensorF vectors, std::vector<LabelCode> labels,
                                  TaskKind task, int num_classes);

}  // namespace refseg
