import numpy as np
import pytest

from wseg.errors import ShapeError
from wseg.imagecore import BinaryMask
from wseg.metrics import jsi, jsi_counts


def brute_force_counts(a, b):
    inter = union = 0
    for y in range(a.shape[0]):
        for x in range(a.shape[1]):
            inter += int(a[y, x] and b[y, x])
            union += int(a[y, x] or b[y, x])
    return inter, union


def test_identical_nonempty():
    m = (np.random.default_rng(0).uniform(size=(8, 8)) > 0.5).astype(np.uint8)
    assert jsi(BinaryMask(m), BinaryMask(m)) == 1.0


def test_disjoint_nonempty():
    a = np.zeros((4, 4), dtype=np.uint8)
    b = np.zeros((4, 4), dtype=np.uint8)
    a[0, 0] = 1
    b[1, 1] = 1
    assert jsi(BinaryMask(a), BinaryMask(b)) == 0.0


def test_counted_example():
    a = np.zeros((4, 4), dtype=np.uint8)
    b = np.zeros((4, 4), dtype=np.uint8)
    a.flat[:4] = 1
    b.flat[2:6] = 1
    assert jsi(BinaryMask(a), BinaryMask(b)) == 2 / 6


def test_both_empty_is_one():
    z = BinaryMask(np.zeros((4, 4), dtype=np.uint8))
    assert jsi(z, z) == 1.0


def test_matches_brute_force_exactly():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        a = (rng.uniform(size=(16, 16)) > rng.uniform()).astype(np.uint8)
        b = (rng.uniform(size=(16, 16)) > rng.uniform()).astype(np.uint8)
        inter, union = brute_force_counts(a, b)
        assert jsi_counts(a, b) == (inter, union)
        expect = 1.0 if union == 0 else inter / union
        assert jsi(a, b) == expect  # same integer division, bit-equal


def test_symmetry_and_lower_bound():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = (rng.uniform(size=(12, 12)) > 0.6).astype(np.uint8)
        b = (rng.uniform(size=(12, 12)) > 0.6).astype(np.uint8)
        assert jsi(a, b) == jsi(b, a)
        inter, _ = jsi_counts(a, b)
        denom = a.sum() + b.sum()
        if denom:
            assert jsi(a, b) >= inter / denom


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        jsi(np.zeros((4, 4)), np.zeros((4, 5)))
