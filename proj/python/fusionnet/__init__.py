"""Membrane segmentation with a residual encoder-decoder network."""

from ._core import (
    Network,
    add_gaussian_noise,
    connected_components,
    crop_center,
    d4_apply,
    dice,
    elastic_warp,
    enrich,
    evaluate,
    gradient_suite,
    info_fscore,
    labels_from_boundary,
    median_filter,
    mirror_pad,
    full_network,
    rand_fscore,
    synthetic_cells,
    thin_boundaries,
    threshold,
    train,
)

__all__ = [
    "Network",
    "add_gaussian_noise",
    "connected_components",
    "crop_center",
    "d4_apply",
    "dice",
    "elastic_warp",
    "enrich",
    "evaluate",
    "gradient_suite",
    "info_fscore",
    "labels_from_boundary",
    "median_filter",
    "mirror_pad",
    "full_network",
    "rand_fscore",
    "synthetic_cells",
    "thin_boundaries",
    "threshold",
    "train",
]
