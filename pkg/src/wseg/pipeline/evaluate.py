"""Test-split evaluation: per-image and pooled JSI, plus overlay images."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import StageError
from ..imagecore import Image, load_mask, save_image, to_grayscale
from ..metrics import jsi_counts
from ..nn import load_checkpoint
from ..nn.graph import ModelGraph
from ..unet import STAGE_FINETUNE, predict_wrinkles, unet_config
from ..weaklabel import TextureConfig
from . import data as D
from .manifest import DatasetManifest


@dataclass
class MetricsReport:
    per_image: list[dict]
    mean_jsi: float | None
    pooled_jsi: float | None
    empty_pairs: int
    checkpoint_id: str
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_image": self.per_image,
            "mean_jsi": self.mean_jsi,
            "pooled_jsi": self.pooled_jsi,
            "empty_pairs": self.empty_pairs,
            "checkpoint_id": self.checkpoint_id,
            "config": self.config,
        }

    def save(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.json").write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        )
        with open(out_dir / "metrics.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image_id", "jsi"])
            for row in self.per_image:
                writer.writerow([row["image_id"], f"{row['jsi']:.6f}"])
            writer.writerow(["mean", "" if self.mean_jsi is None else f"{self.mean_jsi:.6f}"])
            writer.writerow(
                ["pooled", "" if self.pooled_jsi is None else f"{self.pooled_jsi:.6f}"]
            )


def overlay(img: Image, gt, pred) -> Image:
    """GT in the red channel, prediction in green, image luma in blue."""
    gray = to_grayscale(img).data[:, :, 0]
    rgb = np.stack(
        [gt.data.astype(np.float64), pred.data.astype(np.float64), gray], axis=2
    )
    return Image(rgb)


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:12]


def evaluate_model(
    model: ModelGraph,
    manifest: DatasetManifest,
    ids: list[str],
    out_dir: str | Path | None = None,
    tex_cfg: TextureConfig | None = None,
    checkpoint_path: str | Path | None = None,
) -> MetricsReport:
    """Run wrinkle prediction over `ids` and score against fused GT."""
    if model.meta.get("stage") != STAGE_FINETUNE or unet_config(model).out_channels != 2:
        raise StageError("evaluate needs a finetune-stage checkpoint")
    if tex_cfg is None:
        stored = model.meta.get("extra", {}).get("texture_cfg")
        tex_cfg = TextureConfig(**stored) if stored else TextureConfig()

    by_id = manifest.by_id()
    per_image = []
    inter_sum = union_sum = 0
    empty_pairs = 0
    overlays_dir = None
    if out_dir is not None:
        overlays_dir = Path(out_dir) / "overlays"
        overlays_dir.mkdir(parents=True, exist_ok=True)
    for image_id in ids:
        sample = by_id[image_id]
        img = D.load_rgb(manifest, sample)
        face = D.face_mask_for(manifest, sample, img)
        tex = D.texture_channel(img, face, tex_cfg)
        _, pred = predict_wrinkles(model, img, tex)
        gt = load_mask(manifest.path(sample.fused_gt_path))
        inter, union = jsi_counts(pred, gt)
        if union == 0:
            empty_pairs += 1
        per_image.append(
            {"image_id": image_id, "jsi": 1.0 if union == 0 else inter / union}
        )
        inter_sum += inter
        union_sum += union
        if overlays_dir is not None:
            save_image(overlay(img, gt, pred), overlays_dir / f"{image_id}.png")

    mean_jsi = float(np.mean([r["jsi"] for r in per_image])) if per_image else None
    pooled = None
    if per_image:
        pooled = 1.0 if union_sum == 0 else inter_sum / union_sum
    ckpt_id = _file_digest(Path(checkpoint_path)) if checkpoint_path else "in-memory"
    report = MetricsReport(
        per_image=per_image,
        mean_jsi=mean_jsi,
        pooled_jsi=pooled,
        empty_pairs=empty_pairs,
        checkpoint_id=ckpt_id,
        config={"texture_cfg": tex_cfg.__dict__, "n_images": len(ids)},
    )
    if out_dir is not None:
        report.save(out_dir)
    return report


def evaluate(
    checkpoint: str | Path | ModelGraph,
    manifest: DatasetManifest,
    ids: list[str],
    out_dir: str | Path | None = None,
    tex_cfg: TextureConfig | None = None,
) -> MetricsReport:
    """Evaluate a checkpoint file (or in-memory model) on the given ids."""
    if isinstance(checkpoint, ModelGraph):
        return evaluate_model(checkpoint, manifest, ids, out_dir, tex_cfg)
    model = load_checkpoint(checkpoint)
    return evaluate_model(
        model, manifest, ids, out_dir, tex_cfg, checkpoint_path=checkpoint
    )
