"""Single-point detection heads, evaluation metrics and synthetic scenes.

Thin python surface over the C++ core; see the project README for the CLI and
file formats.
"""

from ._core import (
    Model,
    __version__,
    balanced_bce_loss,
    bootstrap_auc_ci,
    decode_argmax,
    delong_test,
    encode_target,
    error_stats,
    generate_dataset,
    load_pgm,
    make_presence_set,
    mean_point_offset,
    mse_point_loss,
    precision_auc,
    precision_curve,
    roc_auc,
    save_pgm,
    spatial_softmax,
    spatial_softmax_nll,
)

__all__ = [
    "Model",
    "__version__",
    "balanced_bce_loss",
    "bootstrap_auc_ci",
    "decode_argmax",
    "delong_test",
    "encode_target",
    "error_stats",
    "generate_dataset",
    "load_pgm",
    "make_presence_set",
    "mean_point_offset",
    "mse_point_loss",
    "precision_auc",
    "precision_curve",
    "roc_auc",
    "save_pgm",
    "spatial_softmax",
    "spatial_softmax_nll",
]
