"""Backend equivalence and the naive-loop convolution oracle."""

import numpy as np
import pytest

from wseg.kernels import jit, reference


def naive_conv(x, w, b, pad):
    """Six-loop cross-correlation, the independent oracle."""
    B, IC, H, W = x.shape
    OC, _, KH, KW = w.shape
    xpad = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    OH, OW = H + 2 * pad - KH + 1, W + 2 * pad - KW + 1
    out = np.zeros((B, OC, OH, OW), dtype=np.float64)
    for bi in range(B):
        for oc in range(OC):
            for oh in range(OH):
                for ow in range(OW):
                    acc = float(b[oc])
                    for ic in range(IC):
                        for u in range(KH):
                            for v in range(KW):
                                acc += w[oc, ic, u, v] * xpad[bi, ic, oh + u, ow + v]
                    out[bi, oc, oh, ow] = acc
    return out


CASES = [
    (1, 2, 3, 5, 5, 3, 1),
    (2, 3, 4, 8, 6, 3, 1),
    (2, 4, 5, 6, 6, 1, 0),
    (1, 1, 1, 4, 4, 3, 0),
]


@pytest.mark.parametrize("B,IC,OC,H,W,K,pad", CASES)
@pytest.mark.parametrize("impl", [reference, jit], ids=["numpy", "numba"])
def test_forward_matches_naive_oracle(impl, B, IC, OC, H, W, K, pad):
    rng = np.random.default_rng(B * 100 + K)
    x = rng.standard_normal((B, IC, H, W))
    w = rng.standard_normal((OC, IC, K, K))
    b = rng.standard_normal(OC)
    got = impl.conv2d_forward(x, w, b, pad)
    np.testing.assert_allclose(got, naive_conv(x, w, b, pad), atol=1e-6)


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-4), (np.float64, 1e-10)])
def test_backends_agree(dtype, tol):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 5, 12, 10)).astype(dtype)
    w = rng.standard_normal((6, 5, 3, 3)).astype(dtype)
    b = rng.standard_normal(6).astype(dtype)
    y_np = reference.conv2d_forward(x, w, b, 1)
    y_nb = jit.conv2d_forward(x, w, b, 1)
    np.testing.assert_allclose(y_np, y_nb, rtol=tol, atol=tol)

    dy = rng.standard_normal(y_np.shape).astype(dtype)
    dx_np = reference.conv2d_grad_input(dy, w, 1, (12, 10))
    dx_nb = jit.conv2d_grad_input(dy, w, 1, (12, 10))
    np.testing.assert_allclose(dx_np, dx_nb, rtol=tol, atol=tol)

    dw_np, db_np = reference.conv2d_grad_params(x, dy, 1)
    dw_nb, db_nb = jit.conv2d_grad_params(x, dy, 1)
    np.testing.assert_allclose(dw_np, dw_nb, rtol=tol, atol=10 * tol)
    np.testing.assert_allclose(db_np, db_nb, rtol=tol, atol=10 * tol)


@pytest.mark.parametrize("impl", [reference, jit], ids=["numpy", "numba"])
def test_grad_input_matches_naive_transpose(impl):
    # dx[i] = sum over outputs that consumed x[i]; validate against the
    # explicit jacobian built from the naive forward
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = np.zeros(3)
    dy = rng.standard_normal((1, 3, 5, 5))
    dx = impl.conv2d_grad_input(dy, w, 1, (5, 5))
    fd = np.zeros_like(x)
    eps = 1e-6
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += eps
        xm = x.copy()
        xm[idx] -= eps
        diff = (naive_conv(xp, w, b, 1) - naive_conv(xm, w, b, 1)) / (2 * eps)
        fd[idx] = (diff * dy).sum()
    np.testing.assert_allclose(dx, fd, atol=1e-5)


@pytest.mark.parametrize("impl", [reference, jit], ids=["numpy", "numba"])
def test_determinism_within_backend(impl):
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, 4, 8, 8)).astype(np.float32)
    w = rng.standard_normal((4, 4, 3, 3)).astype(np.float32)
    b = rng.standard_normal(4).astype(np.float32)
    a = impl.conv2d_forward(x, w, b, 1)
    bb = impl.conv2d_forward(x.copy(), w.copy(), b.copy(), 1)
    assert a.tobytes() == bb.tobytes()


def test_backend_selection_env(tmp_path, monkeypatch):
    import subprocess
    import sys

    code = "import wseg.kernels as k; print(k.BACKEND)"
    for env_val, expect in [("numpy", "numpy"), ("numba", "numba")]:
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={"WSEG_BACKEND": env_val, "PATH": "/usr/bin:/bin"},
            capture_output=True,
            text=True,
            check=True,
        )
        assert out.stdout.strip() == expect
