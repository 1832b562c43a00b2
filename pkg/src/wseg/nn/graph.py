"""Layer graph with explicit forward/backward passes.

A ModelGraph is an ordered node list; node inputs refer to earlier nodes
by index, so the list order is a topological order. Forward retains every
activation; backward walks the list in reverse, accumulating activation
gradients with += at fan-in points (skip connections) in that fixed order,
which keeps runs bit-reproducible.

Supported kinds: input, conv3x3, conv1x1, relu, maxpool2, upsample2, concat.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import ShapeError, StateError

CONV_KINDS = ("conv3x3", "conv1x1")


@dataclass
class Node:
    kind: str
    inputs: tuple[int, ...] = ()
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None
    pad: int = 0
    name: str = ""
    # gradient buffers, filled by ModelGraph.backward
    wgrad: np.ndarray | None = field(default=None, repr=False)
    bgrad: np.ndarray | None = field(default=None, repr=False)


class ModelGraph:
    def __init__(self, dtype=np.float32, meta: dict | None = None):
        self.dtype = np.dtype(dtype)
        self.nodes: list[Node] = []
        self.meta: dict = meta or {}
        self._acts: list[np.ndarray] | None = None
        self._pool_args: dict[int, np.ndarray] = {}

    # -- construction -------------------------------------------------

    def add(self, node: Node) -> int:
        for i in node.inputs:
            if not 0 <= i < len(self.nodes):
                raise ValueError(f"node input index {i} out of range")
        if node.kind in CONV_KINDS:
            k = node.weight.shape[2]
            if node.pad not in (0, (k - 1) // 2):
                raise ValueError(f"pad must be 0 or {(k - 1) // 2}, got {node.pad}")
            node.weight = np.ascontiguousarray(node.weight, dtype=self.dtype)
            node.bias = np.ascontiguousarray(node.bias, dtype=self.dtype)
        self.nodes.append(node)
        return len(self.nodes) - 1

    def conv_nodes(self) -> list[Node]:
        return [n for n in self.nodes if n.kind in CONV_KINDS]

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for n in self.conv_nodes():
            out.append((f"{n.name}.weight", n.weight))
            out.append((f"{n.name}.bias", n.bias))
        return out

    def named_grads(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for n in self.conv_nodes():
            if n.wgrad is None:
                raise StateError("gradients not computed; run backward first")
            out.append((f"{n.name}.weight", n.wgrad))
            out.append((f"{n.name}.bias", n.bgrad))
        return out

    # -- execution ----------------------------------------------------

    def forward(self, x: np.ndarray, retain: bool = True) -> np.ndarray:
        """Run the graph on a (B, C, H, W) batch; retain activations for backward."""
        if x.ndim != 4:
            raise ShapeError(f"expected (B, C, H, W) input, got shape {x.shape}")
        x = np.ascontiguousarray(x, dtype=self.dtype)
        acts: list[np.ndarray] = []
        self._pool_args = {}
        for idx, node in enumerate(self.nodes):
            if node.kind == "input":
                acts.append(x)
            elif node.kind in CONV_KINDS:
                src = acts[node.inputs[0]]
                if src.shape[1] != node.weight.shape[1]:
                    raise ShapeError(
                        f"{node.name}: input has {src.shape[1]} channels, "
                        f"kernel expects {node.weight.shape[1]} "
                        f"(input {src.shape}, weight {node.weight.shape})"
                    )
                acts.append(
                    kernels.conv2d_forward(src, node.weight, node.bias, node.pad)
                )
            elif node.kind == "relu":
                acts.append(np.maximum(acts[node.inputs[0]], 0))
            elif node.kind == "maxpool2":
                y, arg = _maxpool2_forward(acts[node.inputs[0]])
                self._pool_args[idx] = arg
                acts.append(y)
            elif node.kind == "upsample2":
                src = acts[node.inputs[0]]
                acts.append(src.repeat(2, axis=2).repeat(2, axis=3))
            elif node.kind == "concat":
                parts = [acts[i] for i in node.inputs]
                if len({p.shape[2:] for p in parts}) != 1:
                    raise ShapeError(
                        f"{node.name}: concat spatial dims differ: "
                        f"{[p.shape for p in parts]}"
                    )
                acts.append(np.concatenate(parts, axis=1))
            else:
                raise ValueError(f"unknown node kind {node.kind!r}")
        self._acts = acts if retain else None
        return acts[-1]

    def backward(self, loss_grad: np.ndarray) -> np.ndarray:
        """Reverse pass from d(loss)/d(output); returns d(loss)/d(input).

        Parameter gradients land in each conv node's wgrad/bgrad (reset at
        the start of every call, not accumulated across calls).
        """
        if self._acts is None:
            raise StateError("backward called before forward (or activations dropped)")
        acts = self._acts
        out = acts[-1]
        loss_grad = np.ascontiguousarray(loss_grad, dtype=self.dtype)
        if loss_grad.shape != out.shape:
            raise ShapeError(
                f"loss grad shape {loss_grad.shape} != output shape {out.shape}"
            )
        gacts: list[np.ndarray | None] = [None] * len(self.nodes)
        gacts[-1] = loss_grad

        def send(dst: int, g: np.ndarray) -> None:
            if gacts[dst] is None:
                gacts[dst] = g.copy()
            else:
                gacts[dst] += g

        for idx in range(len(self.nodes) - 1, -1, -1):
            node = self.nodes[idx]
            g = gacts[idx]
            if node.kind in CONV_KINDS:
                node.wgrad = None
                node.bgrad = None
            if g is None or node.kind == "input":
                continue
            if node.kind in CONV_KINDS:
                src = acts[node.inputs[0]]
                node.wgrad, node.bgrad = kernels.conv2d_grad_params(src, g, node.pad)
                send(
                    node.inputs[0],
                    kernels.conv2d_grad_input(g, node.weight, node.pad, src.shape[2:]),
                )
            elif node.kind == "relu":
                src = acts[node.inputs[0]]
                send(node.inputs[0], g * (src > 0))
            elif node.kind == "maxpool2":
                src = acts[node.inputs[0]]
                send(node.inputs[0], _maxpool2_backward(g, self._pool_args[idx], src.shape))
            elif node.kind == "upsample2":
                b, c, h, w = g.shape
                send(node.inputs[0], g.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5)))
            elif node.kind == "concat":
                off = 0
                for i in node.inputs:
                    n_ch = acts[i].shape[1]
                    send(i, g[:, off : off + n_ch])
                    off += n_ch
        grad_in = gacts[0]
        return grad_in if grad_in is not None else np.zeros_like(acts[0])


def _maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 requires even spatial dims, got {h}x{w}")
    blocks = (
        x.reshape(b, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h // 2, w // 2, 4)
    )
    arg = blocks.argmax(axis=4)  # first max wins on ties
    y = np.take_along_axis(blocks, arg[..., None], axis=4)[..., 0]
    return np.ascontiguousarray(y), arg


def _maxpool2_backward(g: np.ndarray, arg: np.ndarray, in_shape) -> np.ndarray:
    b, c, h, w = in_shape
    blocks = np.zeros((b, c, h // 2, w // 2, 4), dtype=g.dtype)
    np.put_along_axis(blocks, arg[..., None], g[..., None], axis=4)
    return np.ascontiguousarray(
        blocks.reshape(b, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h, w)
    )


def count_params(model: ModelGraph) -> int:
    """Total number of weight and bias elements."""
    return sum(int(a.size) for _, a in model.named_params())
