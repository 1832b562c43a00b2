import struct

import numpy as np
import pytest

from wseg.errors import CorruptionError, FormatError
from wseg.nn import MAGIC, load_checkpoint, save_checkpoint
from wseg.nn.graph import count_params
from wseg.unet import UNetConfig, build_unet


@pytest.fixture
def model():
    m = build_unet(UNetConfig(3, 1, base_width=4, depth=2, seed=5))
    m.meta["extra"] = {"task": "texture"}
    return m


def test_save_load_save_byte_identical(model, tmp_path):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(model, p1, epoch=3, seed=5)
    again = load_checkpoint(p1)
    save_checkpoint(again, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_restores_params_bit_exact(model, tmp_path):
    p = tmp_path / "a.ckpt"
    save_checkpoint(model, p)
    loaded = load_checkpoint(p)
    for (n1, a1), (n2, a2) in zip(model.named_params(), loaded.named_params()):
        assert n1 == n2
        assert a1.tobytes() == a2.tobytes()
    assert loaded.meta["stage"] == model.meta["stage"]
    assert loaded.meta["extra"] == {"task": "texture"}


def test_param_count_invariant(model, tmp_path):
    p = tmp_path / "a.ckpt"
    save_checkpoint(model, p)
    assert count_params(load_checkpoint(p)) == count_params(model)


def test_bad_magic(model, tmp_path):
    p = tmp_path / "a.ckpt"
    save_checkpoint(model, p)
    raw = bytearray(p.read_bytes())
    raw[:5] = b"NOPE1"
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_checkpoint(p)


def test_truncated_payload(model, tmp_path):
    p = tmp_path / "a.ckpt"
    save_checkpoint(model, p)
    raw = p.read_bytes()
    p.write_bytes(raw[:-17])
    with pytest.raises(CorruptionError):
        load_checkpoint(p)


def test_extended_payload(model, tmp_path):
    p = tmp_path / "a.ckpt"
    save_checkpoint(model, p)
    p.write_bytes(p.read_bytes() + b"\x00\x00\x00\x00")
    with pytest.raises(CorruptionError):
        load_checkpoint(p)


def test_header_shape_mismatch(model, tmp_path):
    p = tmp_path / "a.ckpt"
    save_checkpoint(model, p)
    raw = p.read_bytes()
    (hlen,) = struct.unpack_from("<Q", raw, 5)
    header = raw[13 : 13 + hlen].decode()
    # swap one declared weight shape without touching payload size
    bad = header.replace('"shape":[4,3,3,3]', '"shape":[3,4,3,3]', 1)
    assert bad != header
    p.write_bytes(raw[:5] + struct.pack("<Q", len(bad)) + bad.encode() + raw[13 + hlen :])
    with pytest.raises(CorruptionError):
        load_checkpoint(p)


def test_format_documented_layout(model, tmp_path):
    p = tmp_path / "a.ckpt"
    save_checkpoint(model, p)
    raw = p.read_bytes()
    assert raw[:5] == MAGIC
    (hlen,) = struct.unpack_from("<Q", raw, 5)
    import json

    header = json.loads(raw[13 : 13 + hlen])
    total = sum(int(np.prod(q["shape"])) for q in header["params"])
    assert len(raw) == 13 + hlen + 4 * total
