"""Shared sample loading, degradations and input assembly for the stages."""

from __future__ import annotations

import numpy as np

from ..imagecore import (
    BinaryMask,
    Image,
    TextureMap,
    add_gaussian_noise,
    down_up_sample,
    gaussian_blur,
    load_image,
    load_mask,
    to_grayscale,
)
from ..weaklabel import TextureConfig, apply_face_mask, extract_texture, fallback_face_mask
from .manifest import DatasetManifest, Sample

PRETEXT_KINDS = ("reconstruction", "deblur", "denoise", "super_resolution")

DEBLUR_SIGMA = 2.0
DENOISE_SIGMA = 0.1
SUPERRES_FACTOR = 4


def load_rgb(manifest: DatasetManifest, sample: Sample) -> Image:
    return load_image(manifest.path(sample.image_path))


def face_mask_for(manifest: DatasetManifest, sample: Sample, img: Image) -> BinaryMask:
    if sample.face_mask_path:
        return load_mask(manifest.path(sample.face_mask_path))
    return fallback_face_mask(img)


def texture_channel(img: Image, face: BinaryMask, cfg: TextureConfig) -> TextureMap:
    """The machine-generated texture input used by finetuning and inference."""
    return apply_face_mask(extract_texture(img, cfg), face)


def weak_label_for(
    manifest: DatasetManifest, sample: Sample, img: Image, cfg: TextureConfig
) -> TextureMap:
    """Stored weak label if the manifest has one, else computed on the fly."""
    if sample.weak_label_path:
        mask_img = load_image(manifest.path(sample.weak_label_path))
        return TextureMap(mask_img.data[:, :, 0])
    return texture_channel(img, face_mask_for(manifest, sample, img), cfg)


def degrade(img: Image, kind: str, noise_seed: int) -> Image:
    """Pretext-task input corruption; `reconstruction` leaves the image clean."""
    if kind == "reconstruction":
        return img
    if kind == "deblur":
        return gaussian_blur(img, DEBLUR_SIGMA)
    if kind == "denoise":
        return add_gaussian_noise(img, DENOISE_SIGMA, noise_seed)
    if kind == "super_resolution":
        return down_up_sample(img, SUPERRES_FACTOR)
    raise ValueError(f"unknown pretext kind {kind!r}; expected one of {PRETEXT_KINDS}")


def noise_seed_for(base_seed: int, sample_index: int) -> int:
    # stable per-sample stream so degradations are reproducible
    return base_seed * 1_000_003 + sample_index


def to_chw(img: Image) -> np.ndarray:
    return np.ascontiguousarray(img.data.transpose(2, 0, 1), dtype=np.float32)


def grayscale_target(img: Image) -> np.ndarray:
    return to_grayscale(img).data[None, :, :].astype(np.float32)
