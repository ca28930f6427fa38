#pragma once

#include <stdexcept>
#include <vector>

#include "refseg/labels.hpp"
#include "refseg/rng.hpp"
#include "refseg/tensor.hpp"

namespace refseg {

/// Scene recipe for the synthetic segmentation benchmark. Classes are told
/// apart by intensity and texture, not by position; a per-image brightness
/// offset makes absolute intensity unreliable across images so that models
/// have to pick up the texture cues to generalize.
struct SceneSpec {
    uint32_t height = 64;
    uint32_t width = 64;
    TaskKind task = TaskKind::multi_class;
    /// multi-class: class count including background 0; multi-label: number of
    /// (possibly overlapping) foreground channels.
    int num_classes = 4;
    int min_shapes = 3;
    int max_shapes = 6;
    float noise_sigma = 0.05f;
    float brightness_jitter = 0.15f;
    /// Scale on brightness_jitter for labeled-split draws. Annotated sets are
    /// typically acquired under controlled exposure while the unlabeled pool
    /// spans the full range; 1 keeps both splits identically distributed.
    float labeled_jitter_frac = 1.0f;
    float texture_amp = 0.25f;
    float min_radius_frac = 0.10f;
    float max_radius_frac = 0.28f;
    int coverage_retries = 100;

    int foreground_classes() const {
        return task == TaskKind::multi_class ? num_classes - 1 : num_classes;
    }
};

struct Sample {
    TensorF image;  // (1,h,w) in [0,1]
    LabelField label;
};

struct Dataset {
    TaskKind task = TaskKind::multi_class;
    int num_classes = 0;
    std::vector<Sample> labeled;
    std::vector<TensorF> unlabeled;
    std::vector<Sample> validation;
    std::vector<Sample> test;
};

/// Labeled split cannot cover every class within the retry budget.
class CoverageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Deterministic for a fixed (spec, rng identity). Retries the labeled split
/// until every category (classes plus background) occurs at least once.
Dataset generate_dataset(const SceneSpec& spec, const SeededRng& rng, int n_labeled,
                         int n_unlabeled, int n_val, int n_test);

/// One labeled scene; exposed for tests and the dataset writer.
Sample generate_scene(const SceneSpec& spec, SeededRng rng);

/// Union of category_mask over all pixels of a label map.
uint32_t covered_categories(const LabelField& label);

/// All categories a task requires a split to contain.
uint32_t required_categories(TaskKind task, int num_classes);

}  // namespace refseg
