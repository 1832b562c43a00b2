"""Synthetic face-like dataset with simulated annotators.

Stands in for a real photo corpus plus human annotators. Each sample is a
skin-tone ellipse with smooth shading and band-limited noise on a darker
background; wrinkles are thin quadratic curve strokes drawn darker onto
the face. Simulated annotators perturb the true stroke set (dropped
strokes, one-pixel jitter, dilation or erosion), which gives the fusion
stage realistic disagreement to vote over.

Every sample uses its own generator seeded from (master seed, image
index), so generation is deterministic and order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..imagecore import BinaryMask, Image, blur2d, save_image
from .manifest import DatasetManifest, Sample

FACE_SEMI_X = 0.42  # fraction of width;  matches weaklabel.fallback_face_mask
FACE_SEMI_Y = 0.46  # fraction of height


@dataclass
class AnnotatorNoise:
    drop_prob: float = 0.15
    jitter_px: int = 1
    morph_radius: int = 1


@dataclass
class SynthConfig:
    count: int = 16
    size: int = 64
    n_annotators: int = 3
    seed: int = 0
    wrinkle_count_range: tuple[int, int] = (2, 6)
    noise: AnnotatorNoise = field(default_factory=AnnotatorNoise)

    def __post_init__(self) -> None:
        s = self.size
        if s < 32 or (s & (s - 1)) != 0:
            raise ValueError(f"size must be a power of two >= 32, got {s}")
        if self.n_annotators < 1:
            raise ValueError("need at least one annotator")
        if self.count < 1:
            raise ValueError("count must be >= 1")


def _ellipse_mask(size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    a, b = FACE_SEMI_X * size, FACE_SEMI_Y * size
    return (((xx - c) / a) ** 2 + ((yy - c) / b) ** 2 <= 1.0).astype(np.uint8)


def _disk_offsets(width: int) -> np.ndarray:
    r = width / 2.0
    span = int(np.ceil(r))
    dy, dx = np.mgrid[-span : span + 1, -span : span + 1]
    keep = dy * dy + dx * dx <= r * r
    return np.stack([dy[keep], dx[keep]], axis=1)


def _stamp_stroke(size: int, rng: np.random.Generator) -> np.ndarray:
    """Rasterize one quadratic Bezier stroke of width 1-3 px."""
    c = (size - 1) / 2.0
    # endpoints inside a slightly shrunk face ellipse
    def point() -> np.ndarray:
        while True:
            p = rng.uniform(-1.0, 1.0, size=2)
            if p @ p <= 1.0:
                return np.array(
                    [c + p[0] * FACE_SEMI_Y * size * 0.8, c + p[1] * FACE_SEMI_X * size * 0.8]
                )

    p0 = point()
    angle = rng.uniform(0, 2 * np.pi)
    length = rng.uniform(0.18, 0.45) * size
    p2 = p0 + length * np.array([np.sin(angle), np.cos(angle)])
    mid = (p0 + p2) / 2.0
    normal = np.array([-(p2 - p0)[1], (p2 - p0)[0]])
    norm = np.linalg.norm(normal)
    if norm > 0:
        normal /= norm
    p1 = mid + normal * rng.uniform(-0.25, 0.25) * length

    width = int(rng.integers(1, 4))
    offsets = _disk_offsets(width)
    mask = np.zeros((size, size), dtype=bool)
    ts = np.linspace(0.0, 1.0, max(int(3 * length), 16))
    for t in ts:
        pt = (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t**2 * p2
        py, px = int(round(pt[0])), int(round(pt[1]))
        for dy, dx in offsets:
            y, x = py + dy, px + dx
            if 0 <= y < size and 0 <= x < size:
                mask[y, x] = True
    return mask


def _shift2d(mask: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(mask)
    h, w = mask.shape
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    ys_src = slice(max(-dy, 0), min(h - dy, h))
    xs_src = slice(max(-dx, 0), min(w - dx, w))
    out[ys, xs] = mask[ys_src, xs_src]
    return out


def _morph(mask: np.ndarray, dilate: bool) -> np.ndarray:
    """3x3 (8-connected) dilation or erosion."""
    acc = mask.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            shifted = _shift2d(mask, dy, dx)
            acc = np.logical_or(acc, shifted) if dilate else np.logical_and(acc, shifted)
    return acc


def _annotator_mask(
    strokes: list[np.ndarray],
    face: np.ndarray,
    noise: AnnotatorNoise,
    rng: np.random.Generator,
) -> np.ndarray:
    kept = np.zeros_like(face, dtype=bool)
    for stroke in strokes:
        drop = rng.random() < noise.drop_prob
        if not drop:
            kept |= stroke
    kept &= face.astype(bool)
    j = noise.jitter_px
    dy, dx = (int(v) for v in rng.integers(-j, j + 1, size=2)) if j else (0, 0)
    kept = _shift2d(kept, dy, dx)
    dilate = bool(rng.random() < 0.5)
    radius = int(rng.integers(0, noise.morph_radius + 1)) if noise.morph_radius else 0
    for _ in range(radius):
        kept = _morph(kept, dilate)
    return kept


def _render_sample(cfg: SynthConfig, index: int):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, index]))
    size = cfg.size
    face = _ellipse_mask(size)

    skin = np.array([0.78, 0.62, 0.52]) + rng.uniform(-0.05, 0.05, size=3)
    bg = np.array([0.16, 0.18, 0.22]) + rng.uniform(-0.03, 0.03, size=3)

    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    r2 = ((xx - c) / (FACE_SEMI_X * size)) ** 2 + ((yy - c) / (FACE_SEMI_Y * size)) ** 2
    shading = 1.0 - 0.25 * np.clip(r2, 0.0, 1.0)

    grain = blur2d(rng.standard_normal((size, size)), 1.2)
    grain *= 0.05 / max(np.abs(grain).max(), 1e-9)

    img = np.empty((size, size, 3))
    facef = face.astype(bool)
    for ch in range(3):
        img[:, :, ch] = np.where(
            facef, skin[ch] * shading + grain, bg[ch] + 0.3 * grain
        )

    lo, hi = cfg.wrinkle_count_range
    n_strokes = int(rng.integers(lo, hi + 1))
    strokes = []
    for _ in range(n_strokes):
        stroke = _stamp_stroke(size, rng) & facef
        depth = rng.uniform(0.25, 0.45)
        img[stroke] -= depth
        strokes.append(stroke)
    img = np.clip(img, 0.0, 1.0)

    true_mask = np.zeros((size, size), dtype=bool)
    for s in strokes:
        true_mask |= s

    ann_masks = []
    for a in range(cfg.n_annotators):
        arng = np.random.default_rng(np.random.SeedSequence([cfg.seed, index, 1 + a]))
        ann_masks.append(_annotator_mask(strokes, face, cfg.noise, arng))

    return Image(img), BinaryMask(face), BinaryMask(true_mask.astype(np.uint8)), [
        BinaryMask(m.astype(np.uint8)) for m in ann_masks
    ]


def synth_dataset(cfg: SynthConfig, out_dir: str | Path) -> DatasetManifest:
    """Generate images, face masks, true masks and annotator masks; write
    the dataset manifest at out_dir/manifest.json."""
    root = Path(out_dir)
    for sub in ("images", "faces", "ann", "truth"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    samples = []
    for i in range(cfg.count):
        image_id = f"img{i:04d}"
        img, face, true_mask, ann = _render_sample(cfg, i)
        save_image(img, root / "images" / f"{image_id}.png")
        save_image(face, root / "faces" / f"{image_id}.face.png")
        save_image(true_mask, root / "truth" / f"{image_id}.true.png")
        ann_paths = []
        for a, mask in enumerate(ann, start=1):
            rel = f"ann/{image_id}.a{a}.png"
            save_image(mask, root / rel)
            ann_paths.append(rel)
        samples.append(
            Sample(
                image_id=image_id,
                image_path=f"images/{image_id}.png",
                face_mask_path=f"faces/{image_id}.face.png",
                annotator_mask_paths=ann_paths,
            )
        )
    manifest = DatasetManifest(root=root, seed=cfg.seed, samples=samples)
    manifest.save()
    return manifest
