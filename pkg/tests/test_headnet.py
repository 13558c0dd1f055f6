import math

import numpy as np
import pytest

from oracles import central_diff, conv_loops, silog64
from silogstab import simgen
from silogstab.headnet import (
    InitScheme,
    SigmoidHead,
    conv_backward,
    conv_forward,
    grad_loss_wrt_logits,
    he_sigma,
    head_backward,
    head_forward,
    init_weights,
    loss_and_grads,
    xavier_sigma,
)
from silogstab.losskit import LossConfig
from silogstab.stabbench.gradcheck import run_gradient_check


def _sig64(z):
    return 1.0 / (1.0 + np.exp(-z))


def test_initializer_constants():
    assert xavier_sigma(128, 1, 3, 3) == pytest.approx(0.0415, abs=1e-4)
    assert he_sigma(128, 1, 3, 3) == pytest.approx(0.4714, abs=1e-4)
    assert InitScheme("xavier").sigma() == xavier_sigma(128)
    assert InitScheme("he").sigma() == pytest.approx(0.471405, abs=1e-6)
    assert InitScheme("zero").sigma() == 0.0


def test_init_sample_std_and_zero_bias():
    rng = np.random.default_rng(0)
    # 9 * 11112 > 1e5 draws
    head = init_weights(InitScheme("normal", 0.1), n_in=11112, rng=rng)
    assert head.b == 0.0 and head.W.dtype == np.float32
    assert abs(float(np.std(head.W)) - 0.1) <= 0.003


def test_init_validation():
    with pytest.raises(ValueError):
        InitScheme("normal")
    with pytest.raises(ValueError):
        InitScheme("orthogonal")
    with pytest.raises(ValueError):
        SigmoidHead(np.zeros((3, 3, 4, 1)), M=0.0)
    with pytest.raises(ValueError):
        SigmoidHead(np.zeros((3, 3, 4, 2)))
    with pytest.raises(ValueError):
        SigmoidHead(np.zeros((0, 3, 4, 1)))
    assert InitScheme.from_dict(InitScheme("normal", 0.3).to_dict()) == InitScheme("normal", 0.3)


def test_conv_trivial_cases():
    head = SigmoidHead(np.ones((3, 3, 2, 1)), b=0.25)
    assert np.all(conv_forward(head, np.zeros((5, 5, 2), np.float32)) == np.float32(0.25))
    x = np.random.default_rng(1).normal(size=(4, 6, 1)).astype(np.float32)
    one = SigmoidHead(np.full((1, 1, 1, 1), 0.7))
    np.testing.assert_array_equal(conv_forward(one, x), np.float32(0.7) * x[..., 0])


@pytest.mark.parametrize("padding", ["same", "valid"])
def test_conv_matches_loop_oracle(padding):
    rng = np.random.default_rng(7 if padding == "same" else 8)
    for _ in range(100):
        kh, kw = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        c = int(rng.integers(1, 6))
        h, w = int(rng.integers(kh, kh + 5)), int(rng.integers(kw, kw + 5))
        batch = int(rng.integers(1, 3))
        head = SigmoidHead(rng.normal(size=(kh, kw, c, 1)), b=float(rng.normal()), padding=padding)
        x = rng.normal(size=(batch, h, w, c)).astype(np.float32)
        ref = conv_loops(head.W, head.b, x, padding)
        got = conv_forward(head, x)
        assert got.shape == ref.shape
        assert np.max(np.abs(got - ref)) <= 1e-5 * max(1.0, np.max(np.abs(ref)))


def test_head_forward_saturation():
    head = SigmoidHead(np.full((1, 1, 1, 1), 1.0), M=80.0)
    x = np.array([[[0.0], [-89.0], [-88.0]]], dtype=np.float32)
    y = head_forward(head, x)
    assert y[0, 0] == 40.0
    assert y[0, 1] == 0.0
    # binary32 product 80 * 6.054601e-39
    assert y[0, 2] == np.float32(4.843681e-37)


def test_head_forward_bounds():
    rng = np.random.default_rng(2)
    head = init_weights(InitScheme("normal", 5.0), n_in=8, rng=rng)
    y = head_forward(head, simgen.gen_features((2, 10, 10, 8), rng))
    assert np.all((y >= 0) & (y <= head.M)) and not np.any(np.isnan(y))


def test_head_backward_single_pixel_chain_rule():
    w, xv, gy = 0.3, 1.7, -0.4
    head = SigmoidHead(np.full((1, 1, 1, 1), w), M=80.0)
    gW, gb = head_backward(head, np.full((1, 1, 1), xv, np.float32), np.full((1, 1), gy))
    s = _sig64(w * xv)
    assert gW[0, 0, 0, 0] == pytest.approx(gy * 80 * s * (1 - s) * xv, rel=1e-6)
    assert gb == pytest.approx(gy * 80 * s * (1 - s), rel=1e-6)


def test_head_backward_zero_grad():
    head = init_weights(InitScheme("normal", 0.1), n_in=3, rng=np.random.default_rng(0))
    gW, gb = head_backward(head, np.ones((4, 4, 3), np.float32), np.zeros((4, 4)))
    assert not np.any(gW) and gb == 0


@pytest.mark.parametrize("padding", ["same", "valid"])
def test_head_backward_finite_differences(padding):
    rng = np.random.default_rng(4)
    for _ in range(10):
        head = init_weights(InitScheme("normal", 0.3), n_in=3, rng=rng, padding=padding)
        x = simgen.gen_features((2, 5, 5, 3), rng)
        gy = rng.normal(size=head.output_shape(5, 5)).astype(np.float32)
        gy = np.broadcast_to(gy, (2,) + gy.shape).copy()
        f = lambda W: float(np.sum(gy * 80.0 * _sig64(conv_loops(W, head.b, x, padding))))
        fd = central_diff(f, head.W)
        gW, _ = head_backward(head, x, gy)
        assert np.max(np.abs(gW - fd)) <= 1e-5 * np.max(np.abs(fd))


def test_conv_backward_consistency():
    # <grad_z, conv(dW)> == <conv_backward(grad_z), dW> (adjointness)
    rng = np.random.default_rng(9)
    head = SigmoidHead(rng.normal(size=(3, 3, 2, 1)))
    x = rng.normal(size=(1, 6, 6, 2)).astype(np.float32)
    gz = rng.normal(size=(1, 6, 6)).astype(np.float32)
    gW, gb = conv_backward(head, x, gz)
    dW = rng.normal(size=head.W.shape)
    lhs = float(np.sum(gz * conv_loops(dW, 0.0, x)))
    assert float(np.sum(gW * dW)) == pytest.approx(lhs, rel=1e-5)
    assert gb == pytest.approx(float(gz.sum()), rel=1e-6)


def test_grad_logits_at_optimum_is_zero():
    z = np.array([[0.3, -1.2], [2.0, 0.1]], np.float32)
    y = np.float32(80) * np.float32(1) / (np.float32(1) + np.exp(-z, dtype=np.float32))
    g, d = grad_loss_wrt_logits(z, y, y.copy(), np.ones(z.shape, bool), LossConfig(lam=1.0), 80.0)
    assert not np.any(g) and d.n == 4


@pytest.mark.parametrize("sqrt_wrap", [False, True])
def test_grad_logits_single_pixel(sqrt_wrap):
    cfg = LossConfig(lam=0.5, sqrt_wrap=sqrt_wrap)
    z0, gt = 0.4, 30.0

    def loss(zv):
        y = 80.0 * _sig64(zv[0])
        return silog64([math.log(y) - math.log(gt)], 0.5, sqrt_wrap=sqrt_wrap)

    fd = central_diff(loss, [z0])[0]
    z = np.full((1, 1), z0, np.float32)
    y = np.full((1, 1), np.float32(80) * (np.float32(1) / (np.float32(1) + np.float32(math.exp(-z0)))))
    g, _ = grad_loss_wrt_logits(z, y, np.full((1, 1), gt, np.float32), np.ones((1, 1), bool), cfg, 80.0)
    assert g[0, 0] == pytest.approx(fd, rel=1e-6)


def test_grad_logits_zero_depth_is_nonfinite():
    z = np.array([[-89.0, 0.5]], np.float32)
    y = np.array([[0.0, 30.0]], np.float32)
    g, d = grad_loss_wrt_logits(z, y, np.array([[20.0, 20.0]], np.float32), np.ones((1, 2), bool), LossConfig(), 80.0)
    assert not np.all(np.isfinite(g))
    assert d.values[0] == -np.inf


def test_masked_pixels_get_zero_gradient():
    rng = np.random.default_rng(3)
    head = init_weights(InitScheme("normal", 0.1), n_in=4, rng=rng)
    x = simgen.gen_features((1, 4, 4, 4), rng)
    gt = rng.uniform(5, 50, (1, 4, 4)).astype(np.float32)
    mask = rng.random((1, 4, 4)) < 0.5
    mask[0, 0, 0] = True
    res = loss_and_grads(head, x, gt, mask, LossConfig())
    assert not np.any(res.grad_z[~mask]) and res.n == int(mask.sum())


def test_full_pipeline_gradient_check():
    res = run_gradient_check(trials=50, seed=0)
    assert res.worst < 1e-4, res.worst
