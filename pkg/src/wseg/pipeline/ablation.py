"""Ablation grid: pretraining methods x training-data fractions x seeds.

The main grid compares from-scratch training against texture pretraining
over every fraction; the four self-supervised pretext baselines run at
fraction 1.0 only. All pretrained variants share one architecture and the
same surgery path, so the comparison isolates the pretraining task.
Cells are independent given their seeds, so the grid can run in parallel
worker processes with disjoint output directories.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..nn.graph import count_params
from ..unet import UNetConfig, build_unet, surgery_param_delta
from ..weaklabel import TextureConfig
from .manifest import DatasetManifest, Splits
from .train import TrainConfig, finetune, pretrain

METHODS = (
    "no_pretraining",
    "ours",
    "reconstruction",
    "deblur",
    "denoise",
    "super_resolution",
)
PRETRAINED_METHODS = METHODS[1:]
CSV_HEADER = ["method", "fraction", "seed", "mean_jsi", "pooled_jsi", "n_params"]


@dataclass
class AblationConfig:
    methods: tuple[str, ...] = METHODS
    fractions: tuple[float, ...] = (1.0, 0.5, 0.25, 0.05)
    seeds: tuple[int, ...] = (0,)
    base_width: int = 16
    depth: int = 3
    pretrain_epochs: int | None = None
    finetune_epochs: int | None = None
    batch_size: int = 4
    lr: float = 1e-3
    pos_weight: float = 1.0
    texture: TextureConfig = field(default_factory=TextureConfig)
    jobs: int = 1

    def __post_init__(self) -> None:
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")


def _fractions_for(method: str, cfg: AblationConfig) -> tuple[float, ...]:
    if method == "no_pretraining" or method == "ours":
        return cfg.fractions
    return (1.0,)  # pretext baselines run the full-data column only


def _acfg_from_dict(d: dict) -> AblationConfig:
    d = dict(d)
    if isinstance(d.get("texture"), dict):
        d["texture"] = TextureConfig(**d["texture"])
    for key in ("methods", "fractions", "seeds"):
        d[key] = tuple(d[key])
    return AblationConfig(**d)


def _pretrain_cell(task: dict) -> tuple[str, int, str]:
    manifest = DatasetManifest.load(task["manifest"])
    splits = Splits.load(task["splits"])
    acfg = _acfg_from_dict(task["acfg"])
    method, seed = task["method"], task["seed"]
    model = build_unet(
        UNetConfig(3, 1, acfg.base_width, acfg.depth, seed=seed)
    )
    stage = "pretrain" if method == "ours" else f"pretext:{method}"
    tcfg = TrainConfig(
        stage=stage,
        epochs=acfg.pretrain_epochs,
        batch_size=acfg.batch_size,
        lr=acfg.lr,
        seed=seed,
        texture=acfg.texture,
    )
    res = pretrain(model, manifest, splits, tcfg, out_dir=task["out_dir"])
    return method, seed, str(res.checkpoint_path)


def _finetune_cell(task: dict) -> dict:
    manifest = DatasetManifest.load(task["manifest"])
    splits = Splits.load(task["splits"])
    acfg = _acfg_from_dict(task["acfg"])
    method, fraction, seed = task["method"], task["fraction"], task["seed"]
    tcfg = TrainConfig(
        stage="finetune",
        epochs=acfg.finetune_epochs,
        batch_size=acfg.batch_size,
        lr=acfg.lr,
        pos_weight=acfg.pos_weight,
        fraction=fraction,
        seed=seed,
        texture=acfg.texture,
    )
    if method == "no_pretraining":
        source = build_unet(UNetConfig(4, 2, acfg.base_width, acfg.depth, seed=seed))
        source.meta["stage"] = "finetune"
    else:
        source = task["ckpt"]
    result, report = finetune(source, manifest, splits, tcfg, out_dir=task["out_dir"])
    return {
        "method": method,
        "fraction": fraction,
        "seed": seed,
        "mean_jsi": report.mean_jsi,
        "pooled_jsi": report.pooled_jsi,
        "n_params": count_params(result.model),
    }


def _run_tasks(fn, tasks: list[dict], jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def run_ablation(
    manifest_path: str | Path,
    splits_path: str | Path,
    cfg: AblationConfig,
    out_dir: str | Path,
) -> list[dict]:
    """Train and evaluate the whole grid; write ablation.csv / ablation.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shared = {
        "manifest": str(manifest_path),
        "splits": str(splits_path),
        "acfg": _acfg_dict(cfg),
    }

    pretrain_tasks = [
        dict(shared, method=m, seed=s, out_dir=str(out_dir / f"seed{s}" / m))
        for s in cfg.seeds
        for m in cfg.methods
        if m in PRETRAINED_METHODS
    ]
    ckpts = {
        (m, s): path for m, s, path in _run_tasks(_pretrain_cell, pretrain_tasks, cfg.jobs)
    }

    finetune_tasks = []
    for s in cfg.seeds:
        for m in cfg.methods:
            for f in _fractions_for(m, cfg):
                finetune_tasks.append(
                    dict(
                        shared,
                        method=m,
                        fraction=f,
                        seed=s,
                        ckpt=ckpts.get((m, s)),
                        out_dir=str(out_dir / f"seed{s}" / m / f"frac{f:g}"),
                    )
                )
    rows = _run_tasks(_finetune_cell, finetune_tasks, cfg.jobs)
    rows.sort(key=lambda r: (METHODS.index(r["method"]), -r["fraction"], r["seed"]))

    _write_csv(out_dir / "ablation.csv", rows)
    doc = {
        "rows": rows,
        "aggregates": _aggregate(rows),
        "pretrain_n_params": count_params(
            build_unet(UNetConfig(3, 1, cfg.base_width, cfg.depth))
        ),
        "finetune_n_params": count_params(
            build_unet(UNetConfig(4, 2, cfg.base_width, cfg.depth))
        ),
        "surgery_delta": surgery_param_delta(
            UNetConfig(3, 1, cfg.base_width, cfg.depth),
            UNetConfig(4, 2, cfg.base_width, cfg.depth),
        ),
        "config": _acfg_dict(cfg),
    }
    (out_dir / "ablation.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return rows


def _acfg_dict(cfg: AblationConfig) -> dict:
    d = asdict(cfg)
    d["methods"] = list(cfg.methods)
    d["fractions"] = list(cfg.fractions)
    d["seeds"] = list(cfg.seeds)
    return d


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r["method"],
                    f"{r['fraction']:g}",
                    r["seed"],
                    f"{r['mean_jsi']:.6f}",
                    f"{r['pooled_jsi']:.6f}",
                    r["n_params"],
                ]
            )


def _aggregate(rows: list[dict]) -> list[dict]:
    keys = sorted({(r["method"], r["fraction"]) for r in rows},
                  key=lambda k: (METHODS.index(k[0]), -k[1]))
    out = []
    for method, fraction in keys:
        vals = [r["mean_jsi"] for r in rows
                if r["method"] == method and r["fraction"] == fraction]
        out.append(
            {
                "method": method,
                "fraction": fraction,
                "mean_jsi_mean": float(np.mean(vals)),
                "mean_jsi_sd": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
                "n_seeds": len(vals),
            }
        )
    return out


def render_table(csv_path: str | Path) -> str:
    """Plain-text pivot of an ablation.csv: methods by fraction, seed-averaged."""
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return "(empty table)"
    fractions = sorted({float(r["fraction"]) for r in rows}, reverse=True)
    methods = [m for m in METHODS if any(r["method"] == m for r in rows)]
    cells: dict[tuple[str, float], list[float]] = {}
    for r in rows:
        cells.setdefault((r["method"], float(r["fraction"])), []).append(
            float(r["mean_jsi"])
        )
    width = max(len(m) for m in methods) + 2
    header = "method".ljust(width) + "".join(f"{f * 100:>9.0f}%" for f in fractions)
    lines = [header, "-" * len(header)]
    for m in methods:
        line = m.ljust(width)
        for f in fractions:
            vals = cells.get((m, f))
            line += f"{np.mean(vals):>10.4f}" if vals else " " * 10
        lines.append(line)
    return "\n".join(lines)
