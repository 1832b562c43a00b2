"""Command-line entry point.

Subcommands cover the whole pipeline: synth, weaklabel, fuse, pretrain,
finetune, evaluate, ablate, gradcheck, report. Settings merge as
defaults < WSEG_SEED env < config file (TOML/JSON) < flags, and the
effective configuration is echoed to <out-dir>/config.echo.json next to
whatever the command produced. Exit codes: 0 success, 1 usage error,
2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .fusion import load_annotation_set, majority_vote, pairwise_agreement
from .imagecore import load_image, save_image
from .nn.gradcheck import run_suite
from .pipeline.ablation import METHODS, AblationConfig, render_table, run_ablation
from .pipeline import data as D
from .pipeline.evaluate import evaluate
from .pipeline.manifest import DatasetManifest, Splits, split_dataset
from .pipeline.synth import AnnotatorNoise, SynthConfig, synth_dataset
from .pipeline.train import TrainConfig, finetune, pretrain
from .unet import UNetConfig, build_unet
from .weaklabel import (
    TextureConfig,
    apply_face_mask,
    binarize_texture,
    extract_texture,
)

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _load_config_file(path: str) -> dict:
    p = Path(path)
    text = p.read_bytes()
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode("utf-8"))
    return json.loads(text.decode("utf-8"))


def _resolve(args: argparse.Namespace, command: str, defaults: dict) -> dict:
    """defaults < WSEG_SEED < config file < explicit flags."""
    merged = dict(defaults)
    env_seed = os.environ.get("WSEG_SEED")
    if env_seed is not None and "seed" in merged:
        merged["seed"] = int(env_seed)
    if args.config:
        doc = _load_config_file(args.config)
        for key in merged:
            if key in doc:
                merged[key] = doc[key]
        for key, val in doc.get(command, {}).items():
            if key in merged:
                merged[key] = val
    for key in merged:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            merged[key] = flag_val
    return merged


def _echo_config(out_dir: Path, command: str, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "backend": kernels.BACKEND, "config": cfg}
    (out_dir / "config.echo.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"
    )


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _splits_for(args, manifest: DatasetManifest, cfg: dict, out_dir: Path) -> Splits:
    path = Path(args.splits) if args.splits else out_dir / "splits.json"
    if path.is_file():
        return Splits.load(path)
    ratios = tuple(_float_list(cfg["ratios"]))
    splits = split_dataset(manifest, ratios, seed=cfg["split_seed"])
    path.parent.mkdir(parents=True, exist_ok=True)
    splits.save(path)
    return splits


def _texture_cfg(cfg: dict) -> TextureConfig:
    return TextureConfig(sigma=cfg["sigma"], scale=cfg["scale"])


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    cfg = _resolve(args, "synth", {
        "count": 16, "size": 64, "annotators": 3, "seed": 0,
        "wrinkle_min": 2, "wrinkle_max": 6,
        "drop_prob": 0.15, "jitter": 1, "morph_radius": 1,
    })
    out_dir = Path(args.out_dir or "dataset")
    scfg = SynthConfig(
        count=cfg["count"],
        size=cfg["size"],
        n_annotators=cfg["annotators"],
        seed=cfg["seed"],
        wrinkle_count_range=(cfg["wrinkle_min"], cfg["wrinkle_max"]),
        noise=AnnotatorNoise(cfg["drop_prob"], cfg["jitter"], cfg["morph_radius"]),
    )
    manifest = synth_dataset(scfg, out_dir)
    _echo_config(out_dir, "synth", cfg)
    print(f"wrote {len(manifest.samples)} samples to {out_dir}")
    return 0


def _cmd_weaklabel(args) -> int:
    cfg = _resolve(args, "weaklabel", {
        "sigma": 2.0, "scale": 0.2, "binarize_threshold": None, "seed": 0,
    })
    manifest = DatasetManifest.load(args.manifest)
    tex_cfg = TextureConfig(cfg["sigma"], cfg["scale"], cfg["binarize_threshold"])
    weak_dir = manifest.root / "weak"
    weak_dir.mkdir(parents=True, exist_ok=True)
    for sample in manifest.samples:
        img = load_image(manifest.path(sample.image_path))
        face = D.face_mask_for(manifest, sample, img)
        tex = apply_face_mask(extract_texture(img, tex_cfg), face)
        rel = f"weak/{sample.image_id}.weak.png"
        save_image(tex, manifest.path(rel))
        sample.weak_label_path = rel
        if tex_cfg.binarize_threshold is not None:
            save_image(
                binarize_texture(tex, tex_cfg.binarize_threshold),
                weak_dir / f"{sample.image_id}.weakbin.png",
            )
    manifest.save()
    _echo_config(Path(args.out_dir) if args.out_dir else manifest.root, "weaklabel", cfg)
    print(f"wrote weak labels for {len(manifest.samples)} samples")
    return 0


def _cmd_fuse(args) -> int:
    cfg = _resolve(args, "fuse", {"k": 2, "seed": 0})
    manifest = DatasetManifest.load(args.manifest)
    gt_dir = manifest.root / "gt"
    gt_dir.mkdir(parents=True, exist_ok=True)
    agreement = {}
    for sample in manifest.samples:
        ann = load_annotation_set(manifest.root / "ann", sample.image_id)
        fused = majority_vote(ann, k=cfg["k"])
        rel = f"gt/{sample.image_id}.gt.png"
        save_image(fused, manifest.path(rel))
        sample.fused_gt_path = rel
        if ann.n >= 2:
            rep = pairwise_agreement(ann)
            agreement[sample.image_id] = {
                "pairwise_jsi": rep.pairwise_jsi.tolist(),
                "mean_offdiag": rep.mean_offdiag,
            }
    manifest.save()
    means = [v["mean_offdiag"] for v in agreement.values()]
    doc = {
        "k": cfg["k"],
        "per_image": agreement,
        "mean_pairwise_jsi": float(np.mean(means)) if means else None,
    }
    (manifest.root / "agreement.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n"
    )
    _echo_config(Path(args.out_dir) if args.out_dir else manifest.root, "fuse", cfg)
    print(f"fused {len(manifest.samples)} ground-truth masks (k={cfg['k']})")
    return 0


def _cmd_pretrain(args) -> int:
    cfg = _resolve(args, "pretrain", {
        "task": "texture", "epochs": None, "batch_size": 4, "lr": 1e-3,
        "base_width": 16, "depth": 3, "sigma": 2.0, "scale": 0.2,
        "seed": 0, "deterministic": True,
        "ratios": "0.8,0.1,0.1", "split_seed": 0,
    })
    out_dir = Path(args.out_dir or "run_pretrain")
    manifest = DatasetManifest.load(args.manifest)
    splits = _splits_for(args, manifest, cfg, out_dir)
    model = build_unet(UNetConfig(3, 1, cfg["base_width"], cfg["depth"], seed=cfg["seed"]))
    stage = "pretrain" if cfg["task"] == "texture" else f"pretext:{cfg['task']}"
    tcfg = TrainConfig(
        stage=stage,
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        seed=cfg["seed"],
        deterministic=cfg["deterministic"],
        texture=_texture_cfg(cfg),
    )
    res = pretrain(model, manifest, splits, tcfg, out_dir=out_dir)
    _echo_config(out_dir, "pretrain", cfg)
    print(
        f"pretrained ({cfg['task']}) for {tcfg.resolved_epochs()} epochs; "
        f"best epoch {res.best_epoch}, val loss {res.history['val_loss'][res.best_epoch]:.6f}; "
        f"checkpoint {res.checkpoint_path}"
    )
    return 0


def _cmd_finetune(args) -> int:
    cfg = _resolve(args, "finetune", {
        "epochs": None, "batch_size": 4, "lr": 1e-3, "pos_weight": 1.0,
        "fraction": 1.0, "base_width": 16, "depth": 3, "sigma": 2.0,
        "scale": 0.2, "seed": 0, "deterministic": True,
        "ratios": "0.8,0.1,0.1", "split_seed": 0,
    })
    if bool(args.from_checkpoint) == bool(args.from_scratch):
        raise ValueError("pass exactly one of --from CKPT or --from-scratch")
    out_dir = Path(args.out_dir or "run_finetune")
    manifest = DatasetManifest.load(args.manifest)
    splits = _splits_for(args, manifest, cfg, out_dir)
    if args.from_scratch:
        source = build_unet(
            UNetConfig(4, 2, cfg["base_width"], cfg["depth"], seed=cfg["seed"])
        )
        source.meta["stage"] = "finetune"
    else:
        source = args.from_checkpoint
    tcfg = TrainConfig(
        stage="finetune",
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        pos_weight=cfg["pos_weight"],
        fraction=cfg["fraction"],
        seed=cfg["seed"],
        deterministic=cfg["deterministic"],
        texture=_texture_cfg(cfg),
    )
    res, report = finetune(source, manifest, splits, tcfg, out_dir=out_dir)
    _echo_config(out_dir, "finetune", cfg)
    mean = "n/a" if report.mean_jsi is None else f"{report.mean_jsi:.4f}"
    print(
        f"finetuned on {len(splits.train)} ids at fraction {cfg['fraction']}; "
        f"best epoch {res.best_epoch}; test mean JSI {mean}; "
        f"checkpoint {res.checkpoint_path}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _resolve(args, "evaluate", {
        "split": "test", "seed": 0, "ratios": "0.8,0.1,0.1", "split_seed": 0,
    })
    out_dir = Path(args.out_dir or "run_eval")
    manifest = DatasetManifest.load(args.manifest)
    splits = _splits_for(args, manifest, cfg, out_dir)
    ids = sorted(getattr(splits, cfg["split"]))
    report = evaluate(args.checkpoint, manifest, ids, out_dir=out_dir)
    _echo_config(out_dir, "evaluate", cfg)
    mean = "n/a" if report.mean_jsi is None else f"{report.mean_jsi:.4f}"
    pooled = "n/a" if report.pooled_jsi is None else f"{report.pooled_jsi:.4f}"
    print(f"{cfg['split']} mean JSI {mean}, pooled {pooled} over {len(ids)} images")
    return 0


def _cmd_ablate(args) -> int:
    cfg = _resolve(args, "ablate", {
        "methods": ",".join(METHODS), "fractions": "1.0,0.5,0.25,0.05",
        "seeds": "0", "pretrain_epochs": None, "finetune_epochs": None,
        "batch_size": 4, "lr": 1e-3, "pos_weight": 1.0,
        "base_width": 16, "depth": 3, "sigma": 2.0, "scale": 0.2,
        "jobs": 1, "seed": 0, "ratios": "0.8,0.1,0.1", "split_seed": 0,
    })
    out_dir = Path(args.out_dir or "run_ablation")
    manifest = DatasetManifest.load(args.manifest)
    splits = _splits_for(args, manifest, cfg, out_dir)
    splits_path = Path(args.splits) if args.splits else out_dir / "splits.json"
    if not splits_path.is_file():
        splits.save(splits_path)
    acfg = AblationConfig(
        methods=tuple(m.strip() for m in cfg["methods"].split(",") if m.strip()),
        fractions=tuple(_float_list(cfg["fractions"])),
        seeds=tuple(_int_list(cfg["seeds"])),
        base_width=cfg["base_width"],
        depth=cfg["depth"],
        pretrain_epochs=cfg["pretrain_epochs"],
        finetune_epochs=cfg["finetune_epochs"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        pos_weight=cfg["pos_weight"],
        texture=_texture_cfg(cfg),
        jobs=cfg["jobs"],
    )
    rows = run_ablation(args.manifest, splits_path, acfg, out_dir)
    _echo_config(out_dir, "ablate", cfg)
    print(render_table(out_dir / "ablation.csv"))
    print(f"{len(rows)} cells -> {out_dir / 'ablation.csv'}")
    return 0


def _cmd_gradcheck(args) -> int:
    cfg = _resolve(args, "gradcheck", {"seeds": 10, "full_net": True, "seed": 0})
    results = run_suite(seeds=range(cfg["seeds"]), full_net=cfg["full_net"])
    failed = 0
    for res in results:
        status = "ok" if res.passed else "FAIL"
        print(f"{status:<5} {res.name:<40} max rel err {res.max_rel_err:.3e}")
        failed += not res.passed
    print(f"{len(results) - failed}/{len(results)} gradient checks passed")
    return 0 if failed == 0 else RUNTIME_ERROR


def _cmd_report(args) -> int:
    print(render_table(args.table))
    return 0


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------

def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    sp.add_argument(
        "--deterministic",
        action="store_const",
        const=True,
        default=None,
        help="fixed-order reductions and seeded RNG everywhere (default on)",
    )
    sp.add_argument("--config", default=None, help="TOML or JSON config file")
    sp.add_argument("--out-dir", default=None, help="output directory")


def _add_split_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--splits", default=None,
                    help="splits JSON (created there if missing)")
    sp.add_argument("--ratios", default=None, help="train,val,test (default 0.8,0.1,0.1)")
    sp.add_argument("--split-seed", dest="split_seed", type=int, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="wseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    sp.add_argument("--count", type=int, default=None, help="number of images (default 16)")
    sp.add_argument("--size", type=int, default=None, help="image size, power of two >= 32 (default 64)")
    sp.add_argument("--annotators", type=int, default=None, help="simulated annotators (default 3)")
    sp.add_argument("--wrinkle-min", dest="wrinkle_min", type=int, default=None)
    sp.add_argument("--wrinkle-max", dest="wrinkle_max", type=int, default=None)
    sp.add_argument("--drop-prob", dest="drop_prob", type=float, default=None,
                    help="per-stroke annotator drop probability (default 0.15)")
    sp.add_argument("--jitter", type=int, default=None, help="annotator jitter in px (default 1)")
    sp.add_argument("--morph-radius", dest="morph_radius", type=int, default=None,
                    help="max dilation/erosion radius (default 1)")
    _add_common(sp)
    sp.set_defaults(fn=_cmd_synth)

    sp = sub.add_parser("weaklabel", help="write texture weak labels for a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--sigma", type=float, default=None, help="blur sigma (default 2.0)")
    sp.add_argument("--scale", type=float, default=None, help="residual scale (default 0.2)")
    sp.add_argument("--binarize-threshold", dest="binarize_threshold", type=float,
                    default=None, help="also write thresholded diagnostics")
    _add_common(sp)
    sp.set_defaults(fn=_cmd_weaklabel)

    sp = sub.add_parser("fuse", help="majority-vote annotator masks into ground truth")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--k", type=int, default=None, help="votes required (default 2)")
    _add_common(sp)
    sp.set_defaults(fn=_cmd_fuse)

    sp = sub.add_parser("pretrain", help="weakly supervised pretraining")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--task", default=None,
                    choices=["texture", "reconstruction", "deblur", "denoise", "super_resolution"],
                    help="pretraining target (default texture)")
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--base-width", dest="base_width", type=int, default=None)
    sp.add_argument("--depth", type=int, default=None)
    sp.add_argument("--sigma", type=float, default=None)
    sp.add_argument("--scale", type=float, default=None)
    _add_split_flags(sp)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_pretrain)

    sp = sub.add_parser("finetune", help="supervised finetuning on fused ground truth")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--from", dest="from_checkpoint", default=None,
                    help="pretrain checkpoint to transfer from")
    sp.add_argument("--from-scratch", dest="from_scratch", action="store_true",
                    help="He-initialized 4-in/2-out model instead of a checkpoint")
    sp.add_argument("--fraction", type=float, default=None,
                    help="fraction of the train split to use (default 1.0)")
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--pos-weight", dest="pos_weight", type=float, default=None)
    sp.add_argument("--base-width", dest="base_width", type=int, default=None)
    sp.add_argument("--depth", type=int, default=None)
    sp.add_argument("--sigma", type=float, default=None)
    sp.add_argument("--scale", type=float, default=None)
    _add_split_flags(sp)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_finetune)

    sp = sub.add_parser("evaluate", help="score a finetuned checkpoint on a split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--split", default=None, choices=["train", "val", "test"])
    _add_split_flags(sp)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_evaluate)

    sp = sub.add_parser("ablate", help="run the method x fraction x seed grid")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--methods", default=None, help=f"comma list from {','.join(METHODS)}")
    sp.add_argument("--fractions", default=None, help="comma list (default 1.0,0.5,0.25,0.05)")
    sp.add_argument("--seeds", default=None, help="comma list of seeds (default 0)")
    sp.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int, default=None)
    sp.add_argument("--finetune-epochs", dest="finetune_epochs", type=int, default=None)
    sp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--pos-weight", dest="pos_weight", type=float, default=None)
    sp.add_argument("--base-width", dest="base_width", type=int, default=None)
    sp.add_argument("--depth", type=int, default=None)
    sp.add_argument("--sigma", type=float, default=None)
    sp.add_argument("--scale", type=float, default=None)
    sp.add_argument("--jobs", type=int, default=None, help="parallel worker processes")
    _add_split_flags(sp)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_ablate)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    sp.add_argument("--seeds", type=int, default=None, help="number of seeds (default 10)")
    sp.add_argument("--no-full-net", dest="full_net", action="store_const",
                    const=False, default=None, help="skip the whole-network check")
    _add_common(sp)
    sp.set_defaults(fn=_cmd_gradcheck)

    sp = sub.add_parser("report", help="render an ablation CSV as a text table")
    sp.add_argument("--table", required=True, help="path to ablation.csv")
    _add_common(sp)
    sp.set_defaults(fn=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # single CLI boundary: report and exit 2
        print(f"wseg {args.command}: error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
