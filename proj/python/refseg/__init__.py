"""Reference-guided pseudo-labels for semi-supervised segmentation."""

from ._core import (
    assign_labels,
    brute_force_oracle,
    clipped_cosine,
    generate_scene,
    oracle_suite,
    subsample_indices,
    threshold_multiclass,
    threshold_multilabel,
)

__all__ = [
    "assign_labels",
    "brute_force_oracle",
    "clipped_cosine",
    "generate_scene",
    "oracle_suite",
    "subsample_indices",
    "threshold_multiclass",
    "threshold_multilabel",
]
