"""Attribute-object composition learning via coupled transforms.

The heavy lifting lives in the C++ extension; this package re-exports its
surface. Matrices are plain nested lists, so numpy users should wrap results
with ``np.asarray``.
"""

from ._core import (
    ConfigError,
    DataError,
    Dataset,
    InstanceRecord,
    Model,
    NumericError,
    ShapeError,
    correlation,
    fit,
    load_dataset,
    mauc,
    spearman,
    synth,
    topk_accuracy,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "InstanceRecord",
    "Model",
    "NumericError",
    "ShapeError",
    "correlation",
    "fit",
    "load_dataset",
    "mauc",
    "spearman",
    "synth",
    "topk_accuracy",
]

__version__ = "0.1.0"
