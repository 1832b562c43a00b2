"""Weak-supervision texture masks from face images.

The weak label is the clamped, scaled magnitude of the Gaussian residual
(high-pass) of the grayscale image, zeroed outside the face region. It is
kept continuous in [0, 1]; binarization is a diagnostic convenience only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .imagecore import BinaryMask, Image, TextureMap, blur2d, to_grayscale


@dataclass
class TextureConfig:
    """Parameters of the texture extractor.

    Defaults are tuned for 64-128 px inputs so 1-3 px strokes respond
    near full scale.
    """

    sigma: float = 2.0
    scale: float = 0.2
    binarize_threshold: float | None = None

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.scale <= 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")
        if self.binarize_threshold is not None and not (
            0.0 < self.binarize_threshold < 1.0
        ):
            raise ValueError(
                f"binarize_threshold must be in (0, 1), got {self.binarize_threshold}"
            )


def extract_texture(img: Image, cfg: TextureConfig | None = None) -> TextureMap:
    """High-pass texture magnitude: clamp(|gray - blur(gray, sigma)| / scale, 0, 1)."""
    cfg = cfg or TextureConfig()
    gray = to_grayscale(img).data[:, :, 0]
    residual = np.abs(gray - blur2d(gray, cfg.sigma))
    return TextureMap(np.clip(residual / cfg.scale, 0.0, 1.0))


def apply_face_mask(t: TextureMap, face: BinaryMask) -> TextureMap:
    """Zero the texture map outside the face region (pointwise product)."""
    if (t.height, t.width) != (face.height, face.width):
        raise ShapeError(
            f"texture {t.height}x{t.width} vs face mask {face.height}x{face.width}"
        )
    return TextureMap(t.data * face.data)


def fallback_face_mask(img: Image) -> BinaryMask:
    """Centered ellipse with semi-axes 0.42*W and 0.46*H.

    Crude stand-in for a real face parser; callers should prefer a
    user-supplied mask file whenever one exists.
    """
    h, w = img.height, img.width
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    a, b = 0.42 * w, 0.46 * h
    inside = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2 <= 1.0
    return BinaryMask(inside.astype(np.uint8))


def binarize_texture(t: TextureMap, threshold: float) -> BinaryMask:
    """Thresholded view of a texture map (1 where t >= threshold)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return BinaryMask((t.data >= threshold).astype(np.uint8))
