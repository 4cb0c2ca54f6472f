"""Background-aware token classification and pruning."""

from ._core import (
    CheckpointError,
    DataError,
    Error,
    GeometryError,
    Model,
    ModelConfig,
    NumericError,
    cca,
    count_params,
    estimate_flops,
    generate_synthetic,
    label_from_boxes,
    label_from_mask,
    mask_from_probs,
    prune_report,
    table2_report,
    theta_for_sparsity,
    upscale_labels,
)

__all__ = [
    "CheckpointError",
    "DataError",
    "Error",
    "GeometryError",
    "Model",
    "ModelConfig",
    "NumericError",
    "cca",
    "count_params",
    "estimate_flops",
    "generate_synthetic",
    "label_from_boxes",
    "label_from_mask",
    "mask_from_probs",
    "prune_report",
    "table2_report",
    "theta_for_sparsity",
    "upscale_labels",
]
