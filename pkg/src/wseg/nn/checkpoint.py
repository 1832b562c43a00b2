"""Checkpoint file format.

Byte layout (documented in docs/formats.md):

    bytes 0..4    magic b"WSEG1"
    bytes 5..12   header length, 8-byte little-endian unsigned
    header        UTF-8 JSON: {"arch": {...}, "stage": "pretrain"|"finetune",
                  "epoch": int, "seed": int, "params": [{"name", "shape"}...],
                  "extra": {...}}
    payload       concatenated little-endian float32 arrays, C order, in
                  header "params" order

Models are rebuilt from the arch config, so loading always yields a graph
wired exactly like build_unet produced it. Parameters are float32 on disk
and in the default training dtype, so round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptionError, FormatError
from .graph import ModelGraph

MAGIC = b"WSEG1"


def save_checkpoint(
    model: ModelGraph,
    path: str | Path,
    *,
    epoch: int | None = None,
    seed: int | None = None,
    extra: dict | None = None,
) -> None:
    meta = model.meta
    header = {
        "arch": meta["arch"],
        "stage": meta["stage"],
        "epoch": meta.get("epoch", 0) if epoch is None else epoch,
        "seed": meta.get("seed", 0) if seed is None else seed,
        "params": [
            {"name": n, "shape": list(a.shape)} for n, a in model.named_params()
        ],
        "extra": meta.get("extra", {}) if extra is None else extra,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in model.named_params()
    )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        fh.write(payload)


def load_checkpoint(path: str | Path) -> ModelGraph:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:5]!r}, expected {MAGIC!r}")
    if len(raw) < len(MAGIC) + 8:
        raise CorruptionError(f"{path}: truncated before header length")
    (hlen,) = struct.unpack_from("<Q", raw, len(MAGIC))
    hstart = len(MAGIC) + 8
    if len(raw) < hstart + hlen:
        raise CorruptionError(f"{path}: truncated header")
    try:
        header = json.loads(raw[hstart : hstart + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: invalid header JSON ({exc})") from exc

    params = header["params"]
    sizes = [int(np.prod(p["shape"])) for p in params]
    expected = 4 * sum(sizes)
    payload = raw[hstart + hlen :]
    if len(payload) != expected:
        raise CorruptionError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )

    from ..unet import UNetConfig, build_unet  # deferred: unet builds on nn

    model = build_unet(UNetConfig(**header["arch"]), dtype=np.float32)
    model.meta["stage"] = header["stage"]
    model.meta["epoch"] = header["epoch"]
    model.meta["seed"] = header["seed"]
    model.meta["extra"] = header.get("extra", {})

    built = model.named_params()
    if [n for n, _ in built] != [p["name"] for p in params]:
        raise CorruptionError(f"{path}: parameter list does not match architecture")
    offset = 0
    for (name, arr), spec_p, size in zip(built, params, sizes):
        if list(arr.shape) != list(spec_p["shape"]):
            raise CorruptionError(
                f"{path}: {name} has shape {spec_p['shape']} in header, "
                f"architecture implies {list(arr.shape)}"
            )
        chunk = np.frombuffer(payload, dtype="<f4", count=size, offset=offset)
        arr[...] = chunk.reshape(arr.shape)
        offset += 4 * size
    return model
