import numpy as np
import pytest

from wseg.errors import IncompatibilityError, ShapeError, StageError
from wseg.imagecore import Image, TextureMap
from wseg.nn.graph import count_params
from wseg.unet import (
    PAPER_SCALE,
    UNetConfig,
    build_unet,
    predict_texture,
    predict_wrinkles,
    surgery_param_delta,
    transfer_weights,
)

DESK_PRE = UNetConfig(3, 1, base_width=16, depth=3, seed=0)
DESK_FIN = UNetConfig(4, 2, base_width=16, depth=3, seed=0)


def closed_form_params(cfg: UNetConfig) -> int:
    """Per-layer sum over the architecture table."""
    def conv(ic, oc, k):
        return oc * ic * k * k + oc

    widths = [cfg.base_width * 2**i for i in range(cfg.depth)]
    total = 0
    ic = cfg.in_channels
    for w in widths:
        total += conv(ic, w, 3) + conv(w, w, 3)
        ic = w
    bott = cfg.base_width * 2**cfg.depth
    total += conv(widths[-1], bott, 3) + conv(bott, bott, 3)
    up = bott
    for w in reversed(widths):
        total += conv(up, w, 3) + conv(2 * w, w, 3) + conv(w, w, 3)
        up = w
    total += conv(cfg.base_width, cfg.out_channels, 1)
    return total


@pytest.mark.parametrize("cfg,size", [(DESK_PRE, 64), (DESK_FIN, 64), (DESK_PRE, 32)])
def test_shape_roundtrip(cfg, size):
    model = build_unet(cfg)
    x = np.random.default_rng(0).standard_normal(
        (1, cfg.in_channels, size, size)
    ).astype(np.float32)
    y = model.forward(x, retain=False)
    assert y.shape == (1, cfg.out_channels, size, size)


def test_count_params_matches_closed_form():
    for cfg in (DESK_PRE, DESK_FIN, UNetConfig(1, 1, 8, 2)):
        assert count_params(build_unet(cfg)) == closed_form_params(cfg)


def test_paper_scale_config_builds_param_count():
    cfg = UNetConfig(3, 1, **PAPER_SCALE)
    assert count_params(build_unet(cfg)) == closed_form_params(cfg)


def test_seed_determinism():
    a = build_unet(DESK_PRE)
    b = build_unet(DESK_PRE)
    c = build_unet(UNetConfig(3, 1, 16, 3, seed=1))
    for (n1, p1), (_, p2), (_, p3) in zip(
        a.named_params(), b.named_params(), c.named_params()
    ):
        assert p1.tobytes() == p2.tobytes(), n1
        if "bias" not in n1:
            assert p1.tobytes() != p3.tobytes(), n1


def test_he_init_statistics():
    model = build_unet(UNetConfig(3, 1, 32, 3, seed=3), dtype=np.float64)
    checked = 0
    for node in model.conv_nodes():
        if node.weight.size < 10_000:
            continue
        fan_in = node.weight.shape[1] * node.weight.shape[2] * node.weight.shape[3]
        var = node.weight.var()
        assert abs(var - 2.0 / fan_in) < 0.2 * (2.0 / fan_in), node.name
        checked += 1
    assert checked >= 4


def test_indivisible_input_rejected():
    model = build_unet(DESK_PRE)
    with pytest.raises(ShapeError):
        model.forward(np.zeros((1, 3, 48, 48), dtype=np.float32))  # 48 % 8 != 0 at level 3


def test_transfer_copies_interior_bit_exact():
    pre = build_unet(DESK_PRE)
    fin = transfer_weights(pre, DESK_FIN)
    pre_by_name = {n.name: n for n in pre.conv_nodes()}
    for node in fin.conv_nodes():
        src = pre_by_name[node.name]
        if node.name == "head":
            continue
        if node.name == "enc0.conv0":
            assert node.weight[:, :3].tobytes() == src.weight.tobytes()
            assert np.abs(node.weight[:, 3:]).max() == 0.0
        else:
            assert node.weight.tobytes() == src.weight.tobytes()
        assert node.bias.tobytes() == src.bias.tobytes()
    assert fin.meta["stage"] == "finetune"


def test_transfer_logits_invariant_to_texture_channel():
    rng = np.random.default_rng(1)
    pre = build_unet(DESK_PRE)
    fin = transfer_weights(pre, DESK_FIN)
    rgb = rng.uniform(size=(1, 3, 32, 32)).astype(np.float32)
    t1 = rng.uniform(size=(1, 1, 32, 32)).astype(np.float32)
    t2 = rng.uniform(size=(1, 1, 32, 32)).astype(np.float32)
    y1 = fin.forward(np.concatenate([rgb, t1], axis=1), retain=False)
    y2 = fin.forward(np.concatenate([rgb, t2], axis=1), retain=False)
    np.testing.assert_allclose(y1, y2, atol=1e-6)


def test_transfer_param_delta_closed_form():
    pre = build_unet(DESK_PRE)
    fin = transfer_weights(pre, DESK_FIN)
    delta = count_params(fin) - count_params(pre)
    assert delta == surgery_param_delta(DESK_PRE, DESK_FIN)
    assert delta == 16 * 9 + (16 + 1)  # new input slice + second head channel


def test_transfer_incompatible_configs():
    pre = build_unet(DESK_PRE)
    with pytest.raises(IncompatibilityError):
        transfer_weights(pre, UNetConfig(4, 2, base_width=8, depth=3))
    with pytest.raises(IncompatibilityError):
        transfer_weights(pre, UNetConfig(4, 2, base_width=16, depth=2))


def test_predict_texture_range_and_determinism():
    model = build_unet(UNetConfig(3, 1, 8, 2, seed=2))
    img = Image(np.random.default_rng(3).uniform(size=(32, 32, 3)))
    t1 = predict_texture(model, img)
    t2 = predict_texture(model, img)
    assert t1.data.min() >= 0.0 and t1.data.max() <= 1.0
    np.testing.assert_array_equal(t1.data, t2.data)


def test_predict_texture_wrong_stage():
    fin = transfer_weights(build_unet(DESK_PRE), DESK_FIN)
    with pytest.raises(StageError):
        predict_texture(fin, Image(np.zeros((32, 32, 3))))


def _forced_head_model(bias_bg: float, bias_wr: float):
    model = transfer_weights(build_unet(DESK_PRE), DESK_FIN)
    head = [n for n in model.conv_nodes() if n.name == "head"][0]
    head.weight[...] = 0.0
    head.bias[...] = [bias_bg, bias_wr]
    return model


def test_predict_wrinkles_forced_background():
    model = _forced_head_model(5.0, -5.0)
    img = Image(np.random.default_rng(4).uniform(size=(32, 32, 3)))
    tex = TextureMap(np.zeros((32, 32)))
    prob, mask = predict_wrinkles(model, img, tex)
    assert mask.data.sum() == 0
    assert prob.data.max() < 0.01


def test_predict_wrinkles_tie_goes_to_wrinkle():
    model = _forced_head_model(1.5, 1.5)
    img = Image(np.random.default_rng(5).uniform(size=(32, 32, 3)))
    tex = TextureMap(np.zeros((32, 32)))
    prob, mask = predict_wrinkles(model, img, tex)
    assert mask.data.min() == 1
    np.testing.assert_allclose(prob.data, 0.5, atol=1e-12)


def test_predict_wrinkles_probs_normalized():
    model = transfer_weights(build_unet(DESK_PRE), DESK_FIN)
    rng = np.random.default_rng(6)
    img = Image(rng.uniform(size=(32, 32, 3)))
    tex = TextureMap(rng.uniform(size=(32, 32)))
    x = np.concatenate([img.data.transpose(2, 0, 1), tex.data[None]])[None].astype(
        np.float32
    )
    logits = model.forward(x, retain=False)[0].astype(np.float64)
    z = logits - logits.max(axis=0)
    p0 = np.exp(z[0]) / np.exp(z).sum(axis=0)
    prob, mask = predict_wrinkles(model, img, tex)
    np.testing.assert_allclose(prob.data + p0, 1.0, atol=1e-6)
    np.testing.assert_array_equal(mask.data, (logits[1] >= logits[0]).astype(np.uint8))


def test_predict_wrinkles_wrong_stage():
    pre = build_unet(DESK_PRE)
    with pytest.raises(StageError):
        predict_wrinkles(pre, Image(np.zeros((32, 32, 3))), TextureMap(np.zeros((32, 32))))
