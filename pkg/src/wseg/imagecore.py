"""Image, mask and texture-map types plus the raster ops the pipeline needs.

Images are float64 arrays in [0, 1], shape (H, W, C) with C in {1, 3}.
Binary masks are (H, W) uint8 arrays of exactly {0, 1}. PNG is the
canonical on-disk format (8-bit gray or RGB); PGM/PPM are accepted on read
because they are trivially hand-writable test fixtures.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import FormatError, ShapeError

MASK_THRESHOLD = 128  # gray values >= this read as 1


@dataclass
class Image:
    """H x W x C raster with values in [0, 1], C in {1, 3}."""

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim == 2:
            self.data = self.data[:, :, None]
        if self.data.ndim != 3 or self.data.shape[2] not in (1, 3):
            raise ShapeError(f"image must be (H, W, 1|3), got {self.data.shape}")
        if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class BinaryMask:
    """H x W raster of exactly {0, 1}."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask values must be exactly 0 or 1")
        self.data = arr.astype(np.uint8)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class TextureMap:
    """H x W raster in [0, 1]; the weak-label target."""

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ShapeError(f"texture map must be 2-D, got shape {self.data.shape}")
        if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
            raise ValueError("texture values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def load_image(path: str | Path) -> Image:
    """Load an 8-bit PNG/PGM/PPM file, scaling byte values by 1/255.

    I/O problems (missing file, unreadable) surface as OSError; undecodable
    or unsupported content raises FormatError naming the offending detail.
    """
    raw = Path(path).read_bytes()
    try:
        with PILImage.open(io.BytesIO(raw)) as pim:
            pim.load()
            mode = pim.mode
            if mode in ("RGBA", "LA", "PA"):
                warnings.warn(f"{path}: alpha channel dropped", stacklevel=2)
                pim = pim.convert("RGB" if mode == "RGBA" else "L")
                mode = pim.mode
            if mode not in ("L", "RGB"):
                raise FormatError(
                    f"{path}: unsupported mode {mode!r} (8-bit gray or RGB only)"
                )
            arr = np.asarray(pim, dtype=np.uint8)
    except FormatError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    return Image(arr.astype(np.float64) / 255.0)


def load_mask(path: str | Path) -> BinaryMask:
    """Load a mask PNG; gray values >= 128 read as 1, everything else 0."""
    img = load_image(path)
    gray = img.data[:, :, 0] if img.channels == 1 else to_grayscale(img).data[:, :, 0]
    return BinaryMask((gray * 255.0 >= MASK_THRESHOLD - 0.5).astype(np.uint8))


def save_image(img: Image | BinaryMask | TextureMap, path: str | Path) -> None:
    """Write an 8-bit PNG; real values quantize as round(v*255), masks as {0,255}."""
    if isinstance(img, BinaryMask):
        arr = (img.data * 255).astype(np.uint8)
    elif isinstance(img, TextureMap):
        arr = np.rint(img.data * 255.0).astype(np.uint8)
    elif isinstance(img, Image):
        arr = np.rint(img.data * 255.0).astype(np.uint8)
        if arr.shape[2] == 1:
            arr = arr[:, :, 0]
    else:
        raise TypeError(f"cannot save object of type {type(img).__name__}")
    pim = PILImage.fromarray(arr, mode="RGB" if arr.ndim == 3 else "L")
    pim.save(str(path), format="PNG")


# ---------------------------------------------------------------------------
# Color and geometry
# ---------------------------------------------------------------------------

_LUMA = np.array([0.299, 0.587, 0.114])  # Rec.601


def to_grayscale(img: Image) -> Image:
    """Rec.601 luma of an RGB image; 1-channel input passes through."""
    if img.channels == 1:
        return Image(img.data.copy())
    return Image(np.clip(img.data @ _LUMA, 0.0, 1.0))


def resize_bilinear(img: Image, out_h: int, out_w: int) -> Image:
    """Bilinear resize with half-pixel-centered sampling."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be >= 1, got {out_h}x{out_w}")
    h, w = img.height, img.width
    out = np.empty((out_h, out_w, img.channels))
    sy = _sample_coords(h, out_h)
    sx = _sample_coords(w, out_w)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]
    d = img.data
    out = (
        d[y0][:, x0] * (1 - fy) * (1 - fx)
        + d[y0][:, x1] * (1 - fy) * fx
        + d[y1][:, x0] * fy * (1 - fx)
        + d[y1][:, x1] * fy * fx
    )
    return Image(np.clip(out, 0.0, 1.0))


def _sample_coords(n_in: int, n_out: int) -> np.ndarray:
    # half-pixel centers, clamped so floor/ceil neighbours stay in range
    c = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    return np.clip(c, 0.0, n_in - 1)


# ---------------------------------------------------------------------------
# Gaussian blur (separable, reflect-101 borders)
# ---------------------------------------------------------------------------

def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled 1-D Gaussian, radius ceil(3*sigma), renormalized to sum 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    r = math.ceil(3.0 * sigma)
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    return k / k.sum()


def _reflect101_indices(n: int, radius: int) -> np.ndarray:
    # mirror without repeating the edge sample; valid for any radius
    idx = np.arange(-radius, n + radius)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


def blur2d(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a 2-D array with reflect-101 borders."""
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    out = np.asarray(arr, dtype=np.float64)
    for axis in (0, 1):
        idx = _reflect101_indices(out.shape[axis], r)
        padded = np.take(out, idx, axis=axis)
        acc = np.zeros_like(out)
        for j in range(len(k)):
            sl = [slice(None), slice(None)]
            sl[axis] = slice(j, j + out.shape[axis])
            acc += k[j] * padded[tuple(sl)]
        out = acc
    return out


def gaussian_blur(img: Image, sigma: float) -> Image:
    """Per-channel separable Gaussian blur; preserves constants exactly."""
    out = np.stack(
        [blur2d(img.data[:, :, c], sigma) for c in range(img.channels)], axis=2
    )
    return Image(np.clip(out, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Degradations for the pretext tasks
# ---------------------------------------------------------------------------

def add_gaussian_noise(img: Image, noise_sigma: float, seed: int) -> Image:
    """Add clamped N(0, noise_sigma^2) noise from a generator seeded by `seed`."""
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_sigma, size=img.data.shape)
    return Image(np.clip(img.data + noise, 0.0, 1.0))


def down_up_sample(img: Image, factor: int) -> Image:
    """Bilinear downscale by `factor` (floor division) then upscale back."""
    if factor < 2:
        raise ValueError(f"factor must be >= 2, got {factor}")
    if img.height < factor or img.width < factor:
        raise ValueError(
            f"image {img.height}x{img.width} smaller than factor {factor}"
        )
    small = resize_bilinear(img, img.height // factor, img.width // factor)
    return resize_bilinear(small, img.height, img.width)
