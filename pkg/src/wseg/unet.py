"""U-Net assembly for both training stages, plus transfer-weight surgery.

The pretraining network maps 3-channel RGB to a 1-channel texture logit
map; the finetuning network maps RGB plus a texture channel (4 channels)
to 2-channel background/wrinkle logits. transfer_weights bridges the two:
interior weights copy bit-exactly, the first conv gains a zero-initialized
input slice (so the handoff is invariant to the texture channel), and the
head is freshly initialized for the new class count.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import IncompatibilityError, ShapeError, StageError
from .imagecore import BinaryMask, Image, TextureMap
from .nn.graph import ModelGraph, Node, count_params
from .nn.losses import sigmoid

STAGE_PRETRAIN = "pretrain"
STAGE_FINETUNE = "finetune"


@dataclass
class UNetConfig:
    in_channels: int = 3
    out_channels: int = 1
    base_width: int = 16
    depth: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.depth < 1 or self.base_width < 1:
            raise ValueError("depth and base_width must be >= 1")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")


# Large configuration kept for parameter-count bookkeeping only; it is not
# meant to be trained on a CPU.
PAPER_SCALE = dict(base_width=44, depth=4)


def _he_conv(rng: np.random.Generator, out_c: int, in_c: int, k: int, dtype):
    fan_in = in_c * k * k
    w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_c, in_c, k, k))
    return w.astype(dtype), np.zeros(out_c, dtype=dtype)


def build_unet(cfg: UNetConfig, dtype=np.float32) -> ModelGraph:
    """Encoder-decoder graph: per level two conv3x3+relu then maxpool2;
    symmetric decoder with nearest upsampling, a channel-halving conv,
    skip concat and two conv3x3+relu; final conv1x1 head of raw logits."""
    rng = np.random.default_rng(cfg.seed)
    g = ModelGraph(dtype=dtype, meta={"arch": asdict(cfg), "stage": STAGE_PRETRAIN})
    widths = [cfg.base_width * 2**i for i in range(cfg.depth)]

    def conv(src: int, in_c: int, out_c: int, k: int, name: str) -> int:
        w, b = _he_conv(rng, out_c, in_c, k, dtype)
        kind = "conv3x3" if k == 3 else "conv1x1"
        return g.add(Node(kind, (src,), w, b, pad=(k - 1) // 2, name=name))

    prev = g.add(Node("input"))
    in_c = cfg.in_channels
    skips = []
    for lvl, width in enumerate(widths):
        prev = conv(prev, in_c, width, 3, f"enc{lvl}.conv0")
        prev = g.add(Node("relu", (prev,)))
        prev = conv(prev, width, width, 3, f"enc{lvl}.conv1")
        prev = g.add(Node("relu", (prev,)))
        skips.append(prev)
        prev = g.add(Node("maxpool2", (prev,)))
        in_c = width

    bott = cfg.base_width * 2**cfg.depth
    prev = conv(prev, widths[-1], bott, 3, "bott.conv0")
    prev = g.add(Node("relu", (prev,)))
    prev = conv(prev, bott, bott, 3, "bott.conv1")
    prev = g.add(Node("relu", (prev,)))

    up_c = bott
    for lvl in reversed(range(cfg.depth)):
        width = widths[lvl]
        prev = g.add(Node("upsample2", (prev,)))
        prev = conv(prev, up_c, width, 3, f"dec{lvl}.up")
        prev = g.add(Node("concat", (prev, skips[lvl]), name=f"dec{lvl}.skip"))
        prev = conv(prev, 2 * width, width, 3, f"dec{lvl}.conv0")
        prev = g.add(Node("relu", (prev,)))
        prev = conv(prev, width, width, 3, f"dec{lvl}.conv1")
        prev = g.add(Node("relu", (prev,)))
        up_c = width

    conv(prev, cfg.base_width, cfg.out_channels, 1, "head")
    return g


def unet_config(model: ModelGraph) -> UNetConfig:
    return UNetConfig(**model.meta["arch"])


def transfer_weights(pretrained: ModelGraph, target_cfg: UNetConfig) -> ModelGraph:
    """Channel surgery from a pretrained model to the finetune architecture.

    Interior parameters copy bit-exactly. Extra input channels on the first
    conv start at zero, which makes the transferred model's output exactly
    independent of the new channels until the first update. A head with a
    different class count is discarded and re-initialized from
    target_cfg.seed.
    """
    src_cfg = unet_config(pretrained)
    if (src_cfg.base_width, src_cfg.depth) != (target_cfg.base_width, target_cfg.depth):
        raise IncompatibilityError(
            f"cannot transfer between base/depth {src_cfg} and {target_cfg}"
        )
    if target_cfg.in_channels < src_cfg.in_channels:
        raise IncompatibilityError(
            f"target has fewer input channels ({target_cfg.in_channels}) "
            f"than source ({src_cfg.in_channels})"
        )
    model = build_unet(target_cfg, dtype=pretrained.dtype)
    src_convs = {n.name: n for n in pretrained.conv_nodes()}
    head_rng = np.random.default_rng(target_cfg.seed)
    for node in model.conv_nodes():
        src = src_convs[node.name]
        if node.name == "head" and src.weight.shape[0] != node.weight.shape[0]:
            w, b = _he_conv(
                head_rng, node.weight.shape[0], node.weight.shape[1], 1, model.dtype
            )
            node.weight[...] = w
            node.bias[...] = b
        elif node.weight.shape != src.weight.shape:
            # first conv: copy the old input slice, zero the new channels
            node.weight[...] = 0
            node.weight[:, : src.weight.shape[1]] = src.weight
            node.bias[...] = src.bias
        else:
            node.weight[...] = src.weight
            node.bias[...] = src.bias
    model.meta["stage"] = STAGE_FINETUNE
    model.meta["extra"] = dict(pretrained.meta.get("extra", {}))
    return model


def surgery_param_delta(pre_cfg: UNetConfig, fin_cfg: UNetConfig) -> int:
    """Closed-form parameter growth of transfer_weights.

    New first-conv input slices contribute base_width*3*3 weights each;
    each extra head channel adds base_width weights plus one bias.
    """
    d_in = fin_cfg.in_channels - pre_cfg.in_channels
    d_out = fin_cfg.out_channels - pre_cfg.out_channels
    return d_in * pre_cfg.base_width * 9 + d_out * (pre_cfg.base_width + 1)


def _check_spatial(model: ModelGraph, h: int, w: int) -> None:
    depth = model.meta["arch"]["depth"]
    if h % 2**depth or w % 2**depth:
        raise ShapeError(
            f"input {h}x{w} not divisible by 2^depth = {2 ** depth}"
        )


def predict_texture(model: ModelGraph, img: Image) -> TextureMap:
    """Sigmoid of the 1-channel logit map from a pretrain-stage model."""
    cfg = unet_config(model)
    if model.meta.get("stage") != STAGE_PRETRAIN or cfg.out_channels != 1:
        raise StageError("predict_texture needs a pretrain-stage 1-output model")
    if img.channels != cfg.in_channels:
        raise StageError(
            f"model expects {cfg.in_channels}-channel input, image has {img.channels}"
        )
    _check_spatial(model, img.height, img.width)
    x = img.data.transpose(2, 0, 1)[None].astype(model.dtype)
    logits = model.forward(x, retain=False)
    return TextureMap(np.clip(sigmoid(logits[0, 0].astype(np.float64)), 0.0, 1.0))


def predict_wrinkles(
    model: ModelGraph, img: Image, texture: TextureMap
) -> tuple[TextureMap, BinaryMask]:
    """Softmax wrinkle probability and argmax mask from a finetune model.

    Channel 0 is background, channel 1 wrinkle; equal logits resolve to
    wrinkle so the decision is exactly (wrinkle_logit >= background_logit).
    """
    cfg = unet_config(model)
    if model.meta.get("stage") != STAGE_FINETUNE or cfg.out_channels != 2:
        raise StageError("predict_wrinkles needs a finetune-stage 2-output model")
    if img.channels + 1 != cfg.in_channels:
        raise StageError(
            f"model expects {cfg.in_channels} input channels, "
            f"got image {img.channels} + texture 1"
        )
    if (texture.height, texture.width) != (img.height, img.width):
        raise ShapeError(
            f"texture {texture.height}x{texture.width} vs image {img.height}x{img.width}"
        )
    _check_spatial(model, img.height, img.width)
    x = np.concatenate(
        [img.data.transpose(2, 0, 1), texture.data[None]], axis=0
    )[None].astype(model.dtype)
    logits = model.forward(x, retain=False)[0].astype(np.float64)
    z = logits - logits.max(axis=0, keepdims=True)
    ez = np.exp(z)
    prob = ez[1] / ez.sum(axis=0)
    mask = (logits[1] >= logits[0]).astype(np.uint8)
    return TextureMap(np.clip(prob, 0.0, 1.0)), BinaryMask(mask)
