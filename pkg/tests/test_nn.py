import math

import numpy as np
import pytest

from wseg.errors import ShapeError, StateError
from wseg.nn.graph import ModelGraph, Node, count_params
from wseg.nn.losses import sigmoid, sigmoid_mse, softmax_ce
from wseg.nn.optim import AdamConfig, AdamState, adam_step


def single_conv_graph(w, b, pad, dtype=np.float64):
    g = ModelGraph(dtype=dtype)
    src = g.add(Node("input"))
    kind = "conv3x3" if w.shape[2] == 3 else "conv1x1"
    g.add(Node(kind, (src,), np.asarray(w), np.asarray(b), pad=pad, name="c"))
    return g


def test_conv1x1_scaling():
    g = single_conv_graph(np.array([[[[2.0]]]]), np.zeros(1), 0)
    x = np.random.default_rng(0).standard_normal((1, 1, 4, 4))
    np.testing.assert_allclose(g.forward(x), 2.0 * x)


def test_conv3x3_identity_kernel():
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    g = single_conv_graph(w, np.zeros(1), 1)
    x = np.random.default_rng(1).standard_normal((2, 1, 6, 6))
    np.testing.assert_allclose(g.forward(x), x)


def test_conv_channel_mismatch_names_shapes():
    g = single_conv_graph(np.zeros((2, 3, 3, 3)), np.zeros(2), 1)
    with pytest.raises(ShapeError, match="channels"):
        g.forward(np.zeros((1, 2, 4, 4)))


def test_conv_pad_validation():
    with pytest.raises(ValueError):
        single_conv_graph(np.zeros((1, 1, 3, 3)), np.zeros(1), 2)


def test_relu_values_and_grad():
    g = ModelGraph(dtype=np.float64)
    g.add(Node("input"))
    g.add(Node("relu", (0,)))
    x = np.array([[[[-1.0, 2.0]]]])
    y = g.forward(x)
    np.testing.assert_array_equal(y, [[[[0.0, 2.0]]]])
    gin = g.backward(np.ones_like(y))
    np.testing.assert_array_equal(gin, [[[[0.0, 1.0]]]])


def test_maxpool_value_and_routing():
    g = ModelGraph(dtype=np.float64)
    g.add(Node("input"))
    g.add(Node("maxpool2", (0,)))
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    y = g.forward(x)
    assert y.item() == 4.0
    gin = g.backward(np.array([[[[5.0]]]]))
    np.testing.assert_array_equal(gin, [[[[0.0, 0.0], [0.0, 5.0]]]])


def test_maxpool_rejects_odd_dims():
    g = ModelGraph(dtype=np.float64)
    g.add(Node("input"))
    g.add(Node("maxpool2", (0,)))
    with pytest.raises(ShapeError):
        g.forward(np.zeros((1, 1, 3, 4)))


def test_maxpool_of_upsample_is_identity():
    g = ModelGraph(dtype=np.float64)
    g.add(Node("input"))
    g.add(Node("upsample2", (0,)))
    g.add(Node("maxpool2", (1,)))
    x = np.random.default_rng(2).standard_normal((2, 3, 5, 5))
    np.testing.assert_allclose(g.forward(x), x)


def test_upsample_values():
    g = ModelGraph(dtype=np.float64)
    g.add(Node("input"))
    g.add(Node("upsample2", (0,)))
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    np.testing.assert_array_equal(
        g.forward(x),
        [[[[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]]],
    )


def test_backward_before_forward_is_state_error():
    g = ModelGraph(dtype=np.float64)
    g.add(Node("input"))
    g.add(Node("relu", (0,)))
    with pytest.raises(StateError):
        g.backward(np.zeros((1, 1, 2, 2)))


def test_zero_loss_grad_gives_zero_param_grads():
    rng = np.random.default_rng(3)
    g = single_conv_graph(rng.standard_normal((2, 3, 3, 3)), rng.standard_normal(2), 1)
    y = g.forward(rng.standard_normal((1, 3, 6, 6)))
    g.backward(np.zeros_like(y))
    for _, grad in g.named_grads():
        assert np.abs(grad).max() == 0.0


def test_single_conv_mse_gradient_by_hand():
    # one 1x1 conv on one pixel: z = w*x + b, L = (sigmoid(z) - t)^2
    # dL/dw = 2 (s - t) s (1 - s) x
    w0, b0, x0, t0 = 0.7, -0.2, 1.3, 0.4
    g = single_conv_graph(np.array([[[[w0]]]]), np.array([b0]), 0)
    x = np.array([[[[x0]]]])
    z = g.forward(x)
    loss, grad = sigmoid_mse(z, np.full_like(z, t0))
    g.backward(grad)
    s = 1 / (1 + math.exp(-(w0 * x0 + b0)))
    expect_dw = 2 * (s - t0) * s * (1 - s) * x0
    assert abs(g.nodes[1].wgrad.item() - expect_dw) < 1e-12
    assert abs(loss - (s - t0) ** 2) < 1e-12


def test_forward_deterministic_bits():
    rng = np.random.default_rng(4)
    g = single_conv_graph(
        rng.standard_normal((4, 3, 3, 3)).astype(np.float32),
        rng.standard_normal(4).astype(np.float32),
        1,
        dtype=np.float32,
    )
    x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
    assert g.forward(x).tobytes() == g.forward(x.copy()).tobytes()


# -- losses -------------------------------------------------------------------

def test_sigmoid_mse_zero_at_logit_of_target():
    rng = np.random.default_rng(5)
    t = rng.uniform(0.05, 0.95, size=(1, 1, 4, 4))
    pred = np.log(t / (1 - t))
    loss, grad = sigmoid_mse(pred, t)
    assert loss < 1e-20
    assert np.abs(grad).max() < 1e-12


def test_sigmoid_mse_zero_logits_half_target():
    pred = np.zeros((2, 1, 3, 3))
    loss, _ = sigmoid_mse(pred, np.full_like(pred, 0.5))
    assert loss == 0.0


def test_sigmoid_mse_matches_elementwise_oracle():
    rng = np.random.default_rng(6)
    pred = rng.standard_normal((2, 1, 4, 4))
    target = rng.uniform(size=pred.shape)
    loss, _ = sigmoid_mse(pred, target)
    manual = np.mean([
        (1 / (1 + math.exp(-p)) - t) ** 2
        for p, t in zip(pred.ravel(), target.ravel())
    ])
    assert abs(loss - manual) < 1e-12


def test_softmax_ce_uniform_is_ln2():
    logits = np.zeros((1, 2, 4, 4))
    labels = np.zeros((1, 4, 4), dtype=np.int64)
    loss, _ = softmax_ce(logits, labels)
    assert abs(loss - math.log(2)) < 1e-12


def test_softmax_ce_saturated_margin():
    labels = (np.random.default_rng(7).uniform(size=(1, 4, 4)) > 0.5).astype(np.int64)
    logits = np.zeros((1, 2, 4, 4))
    logits[0, 1][labels[0] == 1] = 20.0
    logits[0, 0][labels[0] == 0] = 20.0
    loss, _ = softmax_ce(logits, labels)
    assert loss < 1e-8


def test_softmax_ce_matches_elementwise_oracle():
    rng = np.random.default_rng(8)
    logits = rng.standard_normal((2, 2, 4, 4)) * 3
    labels = (rng.uniform(size=(2, 4, 4)) > 0.6).astype(np.int64)
    pw = 2.0
    loss, _ = softmax_ce(logits, labels, pos_weight=pw)
    num = den = 0.0
    for b in range(2):
        for y in range(4):
            for x in range(4):
                z0, z1 = logits[b, 0, y, x], logits[b, 1, y, x]
                p = math.exp(z1) / (math.exp(z0) + math.exp(z1))
                cls = labels[b, y, x]
                wgt = pw if cls == 1 else 1.0
                num += wgt * -math.log(p if cls == 1 else 1 - p)
                den += wgt
    assert abs(loss - num / den) < 1e-6


def test_losses_finite_over_wide_logits():
    for v in (-50.0, 50.0):
        logits = np.full((1, 2, 2, 2), v)
        logits[0, 1] = -v
        loss, grad = softmax_ce(logits, np.ones((1, 2, 2), dtype=np.int64))
        assert np.isfinite(loss) and np.isfinite(grad).all()
        loss, grad = sigmoid_mse(np.full((1, 1, 2, 2), v), np.full((1, 1, 2, 2), 0.5))
        assert np.isfinite(loss) and np.isfinite(grad).all()


def test_sigmoid_extremes():
    assert sigmoid(np.array([-800.0])).item() == 0.0
    assert sigmoid(np.array([800.0])).item() == 1.0


def test_loss_shape_errors():
    with pytest.raises(ShapeError):
        sigmoid_mse(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))
    with pytest.raises(ShapeError):
        softmax_ce(np.zeros((1, 3, 2, 2)), np.zeros((1, 2, 2)))


# -- adam ---------------------------------------------------------------------

def test_adam_zero_grad_noop():
    p = np.array([1.0, -2.0])
    state = AdamState()
    adam_step([("p", p, np.zeros(2))], state, AdamConfig())
    np.testing.assert_array_equal(p, [1.0, -2.0])
    assert state.step == 1


def test_adam_first_step_is_lr_times_sign():
    cfg = AdamConfig(lr=1e-3)
    p = np.array([1.0, 1.0])
    g = np.array([0.5, -3.0])
    adam_step([("p", p, g)], AdamState(), cfg)
    np.testing.assert_allclose(p, [1.0 - 1e-3, 1.0 + 1e-3], rtol=1e-6)


def test_adam_descends_quadratic():
    p = np.array([1.0])
    state = AdamState()
    cfg = AdamConfig(lr=0.05)
    prev = p[0] ** 2
    for _ in range(10):
        adam_step([("p", p, 2 * p)], state, cfg)
        now = p[0] ** 2
        assert now < prev
        prev = now


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step([("p", np.zeros(2), np.zeros(3))], AdamState(), AdamConfig())


def test_count_params_formula():
    g = single_conv_graph(np.zeros((8, 1, 3, 3)), np.zeros(8), 1)
    assert count_params(g) == 8 * 1 * 3 * 3 + 8
