"""Central finite-difference verification of every backward pass.

Each check builds a scalar objective in double precision, computes the
analytic gradient through the graph/loss code, then perturbs inputs or
parameters by +-eps and compares. Finite differences only ever call the
forward path, so they stay independent of the code they verify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..unet import UNetConfig, build_unet
from .graph import ModelGraph, Node
from .losses import sigmoid_mse, softmax_ce

EPS = 1e-5
TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_err: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < TOL


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-6)


def _central_diff(f, theta: np.ndarray, idx, eps: float) -> float:
    old = theta[idx]
    theta[idx] = old + eps
    hi = f()
    theta[idx] = old - eps
    lo = f()
    theta[idx] = old
    return (hi - lo) / (2.0 * eps)


def _fd_grad(f, theta: np.ndarray, idx) -> float | None:
    """Central difference at eps/2, or None when the point is non-smooth.

    Comparing the eps and eps/2 estimates exposes relu/argmax kinks inside
    the perturbation interval: for smooth objectives they agree to O(eps^2),
    at a kink they disagree grossly and the sample must not be scored.
    """
    fd1 = _central_diff(f, theta, idx, EPS)
    fd2 = _central_diff(f, theta, idx, EPS / 2.0)
    if _rel_err(fd1, fd2) > 3e-4:
        return None
    return fd2


def _projection_loss(y: np.ndarray, r: np.ndarray) -> tuple[float, np.ndarray]:
    # linear probe sum(y * r): isolates an op's backward from any loss code
    return float((y * r).sum()), r


def _check_graph(
    name: str,
    graph: ModelGraph,
    x: np.ndarray,
    rng: np.random.Generator,
    n_param_samples: int = 4,
    n_input_samples: int = 4,
) -> CheckResult:
    r = rng.standard_normal(graph.forward(x).shape)

    def objective() -> float:
        return float((graph.forward(x) * r).sum())

    graph.forward(x)
    gin = graph.backward(r)
    worst = 0.0
    for flat in rng.choice(x.size, size=min(n_input_samples, x.size), replace=False):
        idx = np.unravel_index(flat, x.shape)
        fd = _fd_grad(objective, x, idx)
        if fd is not None:
            worst = max(worst, _rel_err(gin[idx], fd))
    for node in graph.conv_nodes():
        for arr, grad in ((node.weight, node.wgrad), (node.bias, node.bgrad)):
            k = min(n_param_samples, arr.size)
            for flat in rng.choice(arr.size, size=k, replace=False):
                idx = np.unravel_index(flat, arr.shape)
                fd = _fd_grad(objective, arr, idx)
                if fd is not None:
                    worst = max(worst, _rel_err(grad[idx], fd))
    return CheckResult(name, worst)


def _single_op_graph(kind: str, **node_kw) -> ModelGraph:
    g = ModelGraph(dtype=np.float64)
    src = g.add(Node("input"))
    g.add(Node(kind, (src,), **node_kw))
    return g


def _op_checks(rng: np.random.Generator) -> list[CheckResult]:
    out = []

    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    g = _single_op_graph("conv3x3", weight=w, bias=b, pad=1, name="c")
    out.append(_check_graph("conv3x3", g, rng.standard_normal((2, 3, 8, 8)), rng))

    w = rng.standard_normal((5, 4, 1, 1))
    b = rng.standard_normal(5)
    g = _single_op_graph("conv1x1", weight=w, bias=b, pad=0, name="c")
    out.append(_check_graph("conv1x1", g, rng.standard_normal((2, 4, 6, 6)), rng))

    x = rng.standard_normal((2, 3, 6, 6))
    x = np.where(np.abs(x) < 0.1, x + 0.3, x)  # keep clear of the relu kink
    out.append(_check_graph("relu", _single_op_graph("relu"), x, rng))

    out.append(
        _check_graph(
            "maxpool2", _single_op_graph("maxpool2"), rng.standard_normal((2, 3, 8, 8)), rng
        )
    )
    out.append(
        _check_graph(
            "upsample2", _single_op_graph("upsample2"), rng.standard_normal((2, 3, 5, 5)), rng
        )
    )

    # concat with fan-in: the input feeds both branches
    g = ModelGraph(dtype=np.float64)
    src = g.add(Node("input"))
    p = g.add(Node("maxpool2", (src,)))
    up = g.add(Node("upsample2", (p,)))
    g.add(Node("concat", (src, up), name="cat"))
    x = rng.standard_normal((2, 3, 8, 8))
    x = np.where(np.abs(x) < 0.05, x + 0.2, x)  # pooling argmax must not flip
    out.append(_check_graph("concat+fanin", g, x, rng))
    return out


def _loss_checks(rng: np.random.Generator) -> list[CheckResult]:
    out = []

    pred = rng.standard_normal((2, 1, 5, 5))
    target = rng.uniform(0, 1, size=pred.shape)
    _, grad = sigmoid_mse(pred, target)
    worst = 0.0
    for flat in rng.choice(pred.size, size=6, replace=False):
        idx = np.unravel_index(flat, pred.shape)
        fd = _fd_grad(lambda: sigmoid_mse(pred, target)[0], pred, idx)
        if fd is not None:
            worst = max(worst, _rel_err(grad[idx], fd))
    out.append(CheckResult("sigmoid_mse", worst))

    logits = rng.standard_normal((2, 2, 5, 5)) * 2.0
    labels = (rng.uniform(size=(2, 5, 5)) > 0.7).astype(np.int64)
    for pw in (1.0, 2.5):
        _, grad = softmax_ce(logits, labels, pos_weight=pw)
        worst = 0.0
        for flat in rng.choice(logits.size, size=8, replace=False):
            idx = np.unravel_index(flat, logits.shape)
            fd = _fd_grad(lambda: softmax_ce(logits, labels, pos_weight=pw)[0], logits, idx)
            if fd is not None:
                worst = max(worst, _rel_err(grad[idx], fd))
        out.append(CheckResult(f"softmax_ce(pos_weight={pw})", worst))
    return out


def _unet_check(rng: np.random.Generator, seed: int) -> CheckResult:
    model = build_unet(
        UNetConfig(in_channels=4, out_channels=2, base_width=16, depth=3, seed=seed),
        dtype=np.float64,
    )
    x = rng.standard_normal((2, 4, 16, 16))
    labels = (rng.uniform(size=(2, 16, 16)) > 0.8).astype(np.int64)

    def objective() -> float:
        return softmax_ce(model.forward(x, retain=False), labels, pos_weight=2.0)[0]

    logits = model.forward(x)
    _, lgrad = softmax_ce(logits, labels, pos_weight=2.0)
    model.backward(lgrad)
    worst = 0.0
    for node in model.conv_nodes():
        for arr, grad in ((node.weight, node.wgrad), (node.bias, node.bgrad)):
            for flat in rng.choice(arr.size, size=min(2, arr.size), replace=False):
                idx = np.unravel_index(flat, arr.shape)
                fd = _fd_grad(objective, arr, idx)
                if fd is not None:
                    worst = max(worst, _rel_err(grad[idx], fd))
    return CheckResult("unet(base16,depth3)+softmax_ce", worst)


def run_suite(seeds=range(10), full_net: bool = True) -> list[CheckResult]:
    """Gradient checks for every op, both losses and the desk U-Net."""
    results: list[CheckResult] = []
    for seed in seeds:
        rng = np.random.default_rng(1000 + seed)
        prefix = f"seed{seed}:"
        for res in _op_checks(rng) + _loss_checks(rng):
            results.append(CheckResult(prefix + res.name, res.max_rel_err))
        if full_net:
            res = _unet_check(rng, seed)
            results.append(CheckResult(prefix + res.name, res.max_rel_err))
    return results
