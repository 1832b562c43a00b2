"""The two training stages.

Pretraining regresses the 1-channel sigmoid output against a weak target:
the Gaussian-texture mask for the main method, or the clean grayscale
image for the four pretext baselines (whose inputs are degraded instead).
Finetuning minimizes weighted 2-class softmax cross-entropy on fused
ground truth, selecting the best epoch by validation mean-per-image JSI.

Everything is driven by explicit seeds; with a fixed backend two runs of
the same config produce byte-identical checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import kernels
from ..errors import StageError
from ..imagecore import load_mask
from ..metrics import jsi
from ..nn import AdamConfig, AdamState, adam_step, save_checkpoint, load_checkpoint
from ..nn.graph import ModelGraph
from ..nn.losses import sigmoid_mse, softmax_ce
from ..unet import (
    STAGE_FINETUNE,
    STAGE_PRETRAIN,
    UNetConfig,
    transfer_weights,
    unet_config,
)
from ..weaklabel import TextureConfig
from . import data as D
from .manifest import DatasetManifest, Splits, subset_fraction

DEFAULT_PRETRAIN_EPOCHS = 60
DEFAULT_FINETUNE_EPOCHS = 30  # preserves the 2:1 pretrain:finetune ratio


@dataclass
class TrainConfig:
    stage: str = STAGE_PRETRAIN  # pretrain | finetune | pretext:<kind>
    epochs: int | None = None
    batch_size: int = 4
    lr: float = 1e-3
    pos_weight: float = 1.0
    fraction: float = 1.0
    seed: int = 0
    deterministic: bool = True
    texture: TextureConfig = field(default_factory=TextureConfig)

    def __post_init__(self) -> None:
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        kind = self.pretext_kind
        if kind is not None and kind not in D.PRETEXT_KINDS:
            raise ValueError(f"unknown pretext kind {kind!r}")
        if self.stage.split(":")[0] not in (STAGE_PRETRAIN, STAGE_FINETUNE, "pretext"):
            raise ValueError(f"unknown stage {self.stage!r}")

    @property
    def pretext_kind(self) -> str | None:
        return self.stage.split(":", 1)[1] if self.stage.startswith("pretext:") else None

    @property
    def is_finetune(self) -> bool:
        return self.stage == STAGE_FINETUNE

    def resolved_epochs(self) -> int:
        if self.epochs is not None:
            return self.epochs
        return DEFAULT_FINETUNE_EPOCHS if self.is_finetune else DEFAULT_PRETRAIN_EPOCHS

    def echo(self) -> dict:
        d = asdict(self)
        d["backend"] = kernels.BACKEND
        return d


@dataclass
class TrainResult:
    model: ModelGraph
    history: dict
    best_epoch: int
    checkpoint_path: Path | None


def _batches(n: int, batch_size: int, order=None):
    order = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _mse_dataset_loss(model: ModelGraph, xs, ts, batch_size: int) -> float:
    total = 0.0
    for idx in _batches(len(xs), batch_size):
        x = np.stack([xs[i] for i in idx])
        t = np.stack([ts[i] for i in idx])
        loss, _ = sigmoid_mse(model.forward(x, retain=False), t)
        total += loss * len(idx)
    return total / len(xs)


def _mean_jsi(model: ModelGraph, xs, gts, batch_size: int) -> float:
    vals = []
    for idx in _batches(len(xs), batch_size):
        x = np.stack([xs[i] for i in idx])
        logits = model.forward(x, retain=False)
        pred = (logits[:, 1] >= logits[:, 0]).astype(np.uint8)
        for row, i in enumerate(idx):
            vals.append(jsi(pred[row], gts[i]))
    return float(np.mean(vals))


def _snapshot(model: ModelGraph) -> list[np.ndarray]:
    return [a.copy() for _, a in model.named_params()]


def _restore(model: ModelGraph, snap: list[np.ndarray]) -> None:
    for (_, a), saved in zip(model.named_params(), snap):
        a[...] = saved


def _write_history(out_dir: Path, history: dict, name: str) -> None:
    (out_dir / name).write_text(json.dumps(history, indent=2, sort_keys=True) + "\n")


def pretrain(
    model: ModelGraph,
    manifest: DatasetManifest,
    splits: Splits,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """Weakly supervised pretraining (or a pretext baseline) of a 1-output net."""
    if cfg.is_finetune:
        raise ValueError("pretrain called with a finetune-stage config")
    if not splits.train:
        raise ValueError("train split is empty")
    ucfg = unet_config(model)
    if ucfg.out_channels != 1:
        raise StageError("pretraining expects a 1-output model")

    kind = cfg.pretext_kind
    by_id = manifest.by_id()
    index = {s.image_id: i for i, s in enumerate(manifest.samples)}

    def build_pair(image_id: str):
        sample = by_id[image_id]
        img = D.load_rgb(manifest, sample)
        if kind is None:
            target = D.weak_label_for(manifest, sample, img, cfg.texture)
            return D.to_chw(img), target.data[None].astype(np.float32)
        seed = D.noise_seed_for(cfg.seed, index[image_id])
        return D.to_chw(D.degrade(img, kind, seed)), D.grayscale_target(img)

    train_x, train_t = zip(*(build_pair(i) for i in sorted(splits.train)))
    val_x, val_t = (), ()
    if splits.val:
        val_x, val_t = zip(*(build_pair(i) for i in sorted(splits.val)))

    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    opt = AdamConfig(lr=cfg.lr)
    history = {"train_loss": [], "val_loss": []}
    best = (np.inf, -1, _snapshot(model))
    epochs = cfg.resolved_epochs()
    for epoch in range(epochs):
        order = rng.permutation(len(train_x))
        total = 0.0
        for idx in _batches(len(train_x), cfg.batch_size, order):
            x = np.stack([train_x[i] for i in idx])
            t = np.stack([train_t[i] for i in idx])
            loss, grad = sigmoid_mse(model.forward(x), t)
            model.backward(grad)
            adam_step(
                [(n, p, g) for ((n, p), (_, g)) in zip(model.named_params(), model.named_grads())],
                state,
                opt,
            )
            total += loss * len(idx)
        train_loss = total / len(train_x)
        val_loss = (
            _mse_dataset_loss(model, val_x, val_t, cfg.batch_size) if val_x else train_loss
        )
        history["train_loss"].append(train_loss)
        history["val_loss"].append(val_loss)
        if val_loss < best[0]:
            best = (val_loss, epoch, _snapshot(model))

    _restore(model, best[2])
    model.meta["epoch"] = best[1]
    model.meta["seed"] = cfg.seed
    model.meta["extra"] = {
        "task": kind or "texture",
        "texture_cfg": asdict(cfg.texture),
        "backend": kernels.BACKEND,
    }
    ckpt = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt = out_dir / "pretrain.ckpt"
        save_checkpoint(model, ckpt)
        _write_history(out_dir, history, "pretrain_history.json")
    return TrainResult(model, history, best[1], ckpt)


def _resolve_finetune_model(source, cfg: TrainConfig) -> ModelGraph:
    if isinstance(source, (str, Path)):
        source = load_checkpoint(source)
    if not isinstance(source, ModelGraph):
        raise TypeError(f"cannot finetune from {type(source).__name__}")
    ucfg = unet_config(source)
    if source.meta.get("stage") == STAGE_PRETRAIN and ucfg.out_channels == 1:
        target = UNetConfig(
            in_channels=ucfg.in_channels + 1,
            out_channels=2,
            base_width=ucfg.base_width,
            depth=ucfg.depth,
            seed=cfg.seed,
        )
        return transfer_weights(source, target)
    if source.meta.get("stage") == STAGE_FINETUNE and ucfg.out_channels == 2:
        return source
    raise StageError(
        f"finetune source must be a pretrain (1-out) or finetune (2-out) model, "
        f"got stage={source.meta.get('stage')!r} out={ucfg.out_channels}"
    )


def finetune(
    source,
    manifest: DatasetManifest,
    splits: Splits,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
):
    """Supervised finetuning on fused ground truth.

    `source` is a pretrain checkpoint/model (channel surgery applied here)
    or an already 4-to-2 model for the from-scratch baseline. Returns the
    TrainResult and a MetricsReport on the test split.
    """
    from .evaluate import evaluate_model

    if not splits.train:
        raise ValueError("train split is empty")
    model = _resolve_finetune_model(source, cfg)

    train_ids = sorted(subset_fraction(splits.train, cfg.fraction, cfg.seed))
    by_id = manifest.by_id()
    missing = [
        i for i in train_ids + sorted(splits.val) + sorted(splits.test)
        if not by_id[i].fused_gt_path or not manifest.path(by_id[i].fused_gt_path).is_file()
    ]
    if missing:
        raise FileNotFoundError(f"fused ground truth missing for: {missing}")

    def build_pair(image_id: str):
        sample = by_id[image_id]
        img = D.load_rgb(manifest, sample)
        face = D.face_mask_for(manifest, sample, img)
        tex = D.texture_channel(img, face, cfg.texture)
        x = np.concatenate([D.to_chw(img), tex.data[None].astype(np.float32)])
        gt = load_mask(manifest.path(sample.fused_gt_path))
        return x, gt.data.astype(np.int64)

    train_x, train_y = zip(*(build_pair(i) for i in train_ids))
    val_x, val_y = (), ()
    if splits.val:
        val_x, val_y = zip(*(build_pair(i) for i in sorted(splits.val)))

    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    opt = AdamConfig(lr=cfg.lr)
    history = {"train_loss": [], "val_jsi": []}
    best = (-1.0, -1, _snapshot(model))
    epochs = cfg.resolved_epochs()
    for epoch in range(epochs):
        order = rng.permutation(len(train_x))
        total = 0.0
        for idx in _batches(len(train_x), cfg.batch_size, order):
            x = np.stack([train_x[i] for i in idx])
            y = np.stack([train_y[i] for i in idx])
            loss, grad = softmax_ce(model.forward(x), y, pos_weight=cfg.pos_weight)
            model.backward(grad)
            adam_step(
                [(n, p, g) for ((n, p), (_, g)) in zip(model.named_params(), model.named_grads())],
                state,
                opt,
            )
            total += loss * len(idx)
        history["train_loss"].append(total / len(train_x))
        # without a val split, lowest train loss stands in for best-val
        val_jsi = (
            _mean_jsi(model, val_x, val_y, cfg.batch_size)
            if val_x
            else -history["train_loss"][-1]
        )
        history["val_jsi"].append(val_jsi if val_x else None)
        if val_jsi > best[0]:
            best = (val_jsi, epoch, _snapshot(model))

    _restore(model, best[2])
    model.meta["epoch"] = best[1]
    model.meta["seed"] = cfg.seed
    model.meta.setdefault("extra", {})
    model.meta["extra"].update(
        {
            "texture_cfg": asdict(cfg.texture),
            "fraction": cfg.fraction,
            "pos_weight": cfg.pos_weight,
            "backend": kernels.BACKEND,
        }
    )
    ckpt = None
    eval_dir = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt = out_dir / "finetune.ckpt"
        save_checkpoint(model, ckpt)
        _write_history(out_dir, history, "finetune_history.json")
        eval_dir = out_dir / "test_eval"
    report = evaluate_model(
        model, manifest, sorted(splits.test), out_dir=eval_dir,
        tex_cfg=cfg.texture, checkpoint_path=ckpt,
    )
    return TrainResult(model, history, best[1], ckpt), report
