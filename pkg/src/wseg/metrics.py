"""Jaccard similarity index between binary masks."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .imagecore import BinaryMask


def _as_mask_array(m) -> np.ndarray:
    arr = m.data if isinstance(m, BinaryMask) else np.asarray(m)
    return arr.astype(bool)


def jsi_counts(pred, gt) -> tuple[int, int]:
    """Integer |A intersect B| and |A union B| pixel counts."""
    a = _as_mask_array(pred)
    b = _as_mask_array(gt)
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    inter = int(np.logical_and(a, b).sum())
    union = int(np.logical_or(a, b).sum())
    return inter, union


def jsi(pred, gt) -> float:
    """|A intersect B| / |A union B|; both-empty pairs count as 1.0."""
    inter, union = jsi_counts(pred, gt)
    if union == 0:
        return 1.0
    return inter / union
