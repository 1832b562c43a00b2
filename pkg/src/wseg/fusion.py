"""Fuse multi-annotator wrinkle masks by k-of-n majority voting."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError
from .imagecore import BinaryMask, load_mask
from .metrics import jsi


@dataclass
class AnnotationSet:
    """One image's masks from n >= 1 annotators, all equal-sized."""

    image_id: str
    masks: list[BinaryMask]

    def __post_init__(self) -> None:
        if not self.masks:
            raise ValueError(f"{self.image_id}: annotation set is empty")
        h, w = self.masks[0].height, self.masks[0].width
        for i, m in enumerate(self.masks):
            if (m.height, m.width) != (h, w):
                raise ShapeError(
                    f"{self.image_id}: mask {i} is {m.height}x{m.width}, expected {h}x{w}"
                )

    @property
    def n(self) -> int:
        return len(self.masks)


@dataclass
class AgreementReport:
    """Pairwise JSI matrix between annotators plus its off-diagonal mean."""

    pairwise_jsi: np.ndarray
    mean_offdiag: float = field(init=False)

    def __post_init__(self) -> None:
        m = np.asarray(self.pairwise_jsi, dtype=np.float64)
        n = m.shape[0]
        off = m[~np.eye(n, dtype=bool)]
        self.mean_offdiag = float(off.mean()) if off.size else 1.0


def majority_vote(ann: AnnotationSet, k: int = 2) -> BinaryMask:
    """Pixel is 1 iff at least k of the n annotators marked it."""
    if not 1 <= k <= ann.n:
        raise ValueError(f"k must be in [1, {ann.n}], got {k}")
    votes = np.zeros((ann.masks[0].height, ann.masks[0].width), dtype=np.int64)
    for m in ann.masks:
        votes += m.data
    return BinaryMask((votes >= k).astype(np.uint8))


def pairwise_agreement(ann: AnnotationSet) -> AgreementReport:
    """JSI between every annotator pair (empty-vs-empty counts as 1)."""
    if ann.n < 2:
        raise ValueError(f"need >= 2 annotators, got {ann.n}")
    n = ann.n
    mat = np.eye(n, dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            mat[i, j] = mat[j, i] = jsi(ann.masks[i], ann.masks[j])
    return AgreementReport(mat)


_ANNOT_RE = re.compile(r"\.a(\d+)\.png$")


def load_annotation_set(directory: str | Path, image_id: str) -> AnnotationSet:
    """Load `<image_id>.a<i>.png` files from a directory, sorted by i."""
    directory = Path(directory)
    found: list[tuple[int, Path]] = []
    for p in directory.glob(f"{image_id}.a*.png"):
        m = _ANNOT_RE.search(p.name)
        if m and p.name == f"{image_id}.a{m.group(1)}.png":
            found.append((int(m.group(1)), p))
    if not found:
        raise FileNotFoundError(
            f"no annotator masks matching {image_id}.a<i>.png under {directory}"
        )
    found.sort()
    masks = []
    h = w = None
    for _, p in found:
        mask = load_mask(p)
        if h is None:
            h, w = mask.height, mask.width
        elif (mask.height, mask.width) != (h, w):
            raise FormatError(
                f"{p}: mask is {mask.height}x{mask.width}, expected {h}x{w}"
            )
        masks.append(mask)
    return AnnotationSet(image_id, masks)
