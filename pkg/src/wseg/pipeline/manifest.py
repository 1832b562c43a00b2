"""Dataset manifests, train/val/test splits and fraction subsets.

A manifest is a JSON file living at the dataset root; every path inside it
is relative to that root, so datasets relocate freely and two identically
seeded runs produce byte-identical manifests regardless of where they ran.
Schema in docs/formats.md.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

MANIFEST_FORMAT = "wseg-manifest-v1"
SPLITS_FORMAT = "wseg-splits-v1"


@dataclass
class Sample:
    image_id: str
    image_path: str
    face_mask_path: str | None = None
    annotator_mask_paths: list[str] = field(default_factory=list)
    fused_gt_path: str | None = None
    weak_label_path: str | None = None


@dataclass
class DatasetManifest:
    root: Path
    seed: int
    samples: list[Sample]

    def __post_init__(self) -> None:
        self.root = Path(self.root)
        ids = [s.image_id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image_ids in manifest")

    def path(self, rel: str) -> Path:
        return self.root / rel

    def by_id(self) -> dict[str, Sample]:
        return {s.image_id: s for s in self.samples}

    def validate_files(self) -> None:
        missing = []
        for s in self.samples:
            for rel in [s.image_path, s.face_mask_path, s.fused_gt_path,
                        s.weak_label_path, *s.annotator_mask_paths]:
                if rel is not None and not self.path(rel).is_file():
                    missing.append(rel)
        if missing:
            raise FileNotFoundError(f"manifest references missing files: {missing}")

    def save(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path else self.root / "manifest.json"
        doc = {
            "format": MANIFEST_FORMAT,
            "seed": self.seed,
            "samples": [asdict(s) for s in self.samples],
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        if doc.get("format") != MANIFEST_FORMAT:
            raise ValueError(f"{path}: not a {MANIFEST_FORMAT} file")
        samples = [Sample(**s) for s in doc["samples"]]
        return cls(root=path.parent, seed=doc["seed"], samples=samples)


@dataclass
class Splits:
    train: list[str]
    val: list[str]
    test: list[str]
    ratios: tuple[float, float, float]
    seed: int

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        doc = {
            "format": SPLITS_FORMAT,
            "seed": self.seed,
            "ratios": list(self.ratios),
            "train": self.train,
            "val": self.val,
            "test": self.test,
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Splits":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != SPLITS_FORMAT:
            raise ValueError(f"{path}: not a {SPLITS_FORMAT} file")
        return cls(
            train=doc["train"],
            val=doc["val"],
            test=doc["test"],
            ratios=tuple(doc["ratios"]),
            seed=doc["seed"],
        )


def split_dataset(
    manifest: DatasetManifest,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> Splits:
    """Seeded shuffle then contiguous cut; val/test get floor counts,
    the remainder goes to train."""
    if not manifest.samples:
        raise ValueError("cannot split an empty manifest")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    ids = sorted(s.image_id for s in manifest.samples)
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n = len(order)
    n_val = int(np.floor(ratios[1] * n))
    n_test = int(np.floor(ratios[2] * n))
    n_train = n - n_val - n_test
    return Splits(
        train=order[:n_train],
        val=order[n_train : n_train + n_val],
        test=order[n_train + n_val :],
        ratios=tuple(ratios),
        seed=seed,
    )


def subset_fraction(train_ids: list[str], fraction: float, seed: int) -> list[str]:
    """Seeded sample of round(fraction*n) ids without replacement.

    A single shuffle with prefix cuts makes subsets nested: for the same
    seed, the 5% set is contained in the 25% set and so on.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    ids = sorted(train_ids)
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    k = int(round(fraction * len(ids)))
    if k == 0:
        raise ValueError(
            f"fraction {fraction} of {len(ids)} ids rounds to zero samples"
        )
    return order[:k]
