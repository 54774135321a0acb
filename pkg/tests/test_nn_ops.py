"""Tensor ops against brute-force oracles and central finite differences."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rodkit.exceptions import ConfigError, DimensionError
from rodkit.nn import ops

FD_EPS = 1e-5


def naive_conv3d(x, w, b, stride, pad):
    N, Ci, T, R, A = x.shape
    Co, _, kt, kr, ka = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad[0],) * 2, (pad[1],) * 2, (pad[2],) * 2))
    To = (T + 2 * pad[0] - kt) // stride[0] + 1
    Ro = (R + 2 * pad[1] - kr) // stride[1] + 1
    Ao = (A + 2 * pad[2] - ka) // stride[2] + 1
    out = np.zeros((N, Co, To, Ro, Ao))
    for n in range(N):
        for o in range(Co):
            for t in range(To):
                for r in range(Ro):
                    for a in range(Ao):
                        acc = b[o] if b is not None else 0.0
                        for c in range(Ci):
                            for i in range(kt):
                                for j in range(kr):
                                    for k in range(ka):
                                        acc += (w[o, c, i, j, k]
                                                * xp[n, c, t * stride[0] + i, r * stride[1] + j,
                                                     a * stride[2] + k])
                        out[n, o, t, r, a] = acc
    return out


def naive_deconv3d(x, w, b, stride, pad):
    """Scatter formulation: every input cell stamps the kernel onto the output."""
    N, Ci, T, R, A = x.shape
    _, Co, kt, kr, ka = w.shape
    full = ((T - 1) * stride[0] + kt, (R - 1) * stride[1] + kr, (A - 1) * stride[2] + ka)
    acc = np.zeros((N, Co) + full)
    for n in range(N):
        for c in range(Ci):
            for t in range(T):
                for r in range(R):
                    for a in range(A):
                        acc[n, :, t * stride[0]: t * stride[0] + kt, r * stride[1]: r * stride[1] + kr,
                            a * stride[2]: a * stride[2] + ka] += x[n, c, t, r, a] * w[c]
    out = acc[:, :, pad[0]: full[0] - pad[0], pad[1]: full[1] - pad[1], pad[2]: full[2] - pad[2]]
    if b is not None:
        out = out + b[None, :, None, None, None]
    return out


def numeric_grad(f, arr, eps=FD_EPS):
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + eps
        fp = f()
        arr[idx] = old - eps
        fm = f()
        arr[idx] = old
        g[idx] = (fp - fm) / (2 * eps)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)


CONV_CASES = [
    # (N, Ci, Co, size, kernel, stride, pad)
    (1, 1, 1, (3, 4, 4), (3, 3, 3), (1, 1, 1), (1, 1, 1)),
    (2, 2, 3, (4, 5, 6), (3, 3, 3), (1, 2, 2), (1, 1, 1)),
    (1, 3, 2, (5, 4, 4), (2, 2, 2), (2, 2, 2), (0, 0, 0)),
    (2, 2, 2, (6, 3, 5), (5, 3, 3), (1, 1, 1), (2, 1, 1)),
    (1, 2, 4, (4, 6, 4), (1, 1, 1), (1, 1, 1), (0, 0, 0)),
    (1, 1, 2, (7, 5, 5), (3, 2, 3), (2, 1, 2), (1, 0, 1)),
]

DECONV_CASES = [
    (1, 1, 1, (2, 2, 2), (3, 3, 3), (1, 1, 1), (1, 1, 1)),
    (2, 3, 2, (2, 3, 3), (4, 2, 2), (2, 2, 2), (1, 0, 0)),
    (1, 2, 3, (3, 2, 2), (3, 4, 4), (1, 2, 2), (1, 1, 1)),
    (1, 2, 2, (2, 2, 3), (2, 2, 2), (2, 2, 2), (0, 0, 0)),
    (2, 1, 2, (3, 3, 2), (3, 2, 2), (1, 2, 2), (1, 0, 0)),
    (1, 2, 1, (2, 3, 2), (1, 3, 3), (1, 1, 1), (0, 1, 1)),
]


@pytest.mark.parametrize("case", CONV_CASES)
def test_conv3d_matches_naive_loops(case):
    N, Ci, Co, size, k, s, p = case
    r = np.random.default_rng(0)
    x = r.normal(size=(N, Ci) + size)
    w = r.normal(size=(Co, Ci) + k)
    b = r.normal(size=Co)
    out, _ = ops.conv3d_forward(x, w, b, s, p)
    assert np.max(np.abs(out - naive_conv3d(x, w, b, s, p))) < 1e-10


@pytest.mark.parametrize("case", DECONV_CASES)
def test_deconv3d_matches_scatter_oracle(case):
    N, Ci, Co, size, k, s, p = case
    r = np.random.default_rng(1)
    x = r.normal(size=(N, Ci) + size)
    w = r.normal(size=(Ci, Co) + k)
    b = r.normal(size=Co)
    out, _ = ops.deconv3d_forward(x, w, b, s, p)
    assert np.max(np.abs(out - naive_deconv3d(x, w, b, s, p))) < 1e-10


@pytest.mark.parametrize("case", DECONV_CASES)
def test_deconv_is_conv_input_gradient(case):
    """Duality: transposed conv equals the conv backward pass w.r.t. its input."""
    N, Ci, Co, size, k, s, p = case
    r = np.random.default_rng(2)
    x = r.normal(size=(N, Ci) + size)
    w = r.normal(size=(Ci, Co) + k)
    out, _ = ops.deconv3d_forward(x, w, None, s, p)
    # conv mapping the deconv output back to x's shape, weight read as (C_out=Ci, C_in=Co)
    probe = np.zeros(out.shape)
    conv_out, cache = ops.conv3d_forward(probe, w, None, s, p)
    assert conv_out.shape == x.shape
    gx, _, _ = ops.conv3d_backward(x, cache)
    assert np.max(np.abs(gx - out)) < 1e-10
    # adjoint identity with the naive conv: <deconv(x), y> == <x, conv(y)>
    y = r.normal(size=out.shape)
    lhs = np.sum(out * y)
    rhs = np.sum(x * naive_conv3d(y, w, None, s, p))
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


@pytest.mark.parametrize("case", CONV_CASES)
def test_conv3d_gradients_finite_difference(case):
    N, Ci, Co, size, k, s, p = case
    r = np.random.default_rng(3)
    x = r.normal(size=(N, Ci) + size)
    w = r.normal(size=(Co, Ci) + k)
    b = r.normal(size=Co)
    out, cache = ops.conv3d_forward(x, w, b, s, p)
    g = r.normal(size=out.shape)

    def f():
        return np.sum(ops.conv3d_forward(x, w, b, s, p)[0] * g)

    gx, gw, gb = ops.conv3d_backward(g, cache)
    assert rel_err(gx, numeric_grad(f, x)) < 1e-4
    assert rel_err(gw, numeric_grad(f, w)) < 1e-4
    assert rel_err(gb, numeric_grad(f, b)) < 1e-4


@pytest.mark.parametrize("case", DECONV_CASES)
def test_deconv3d_gradients_finite_difference(case):
    N, Ci, Co, size, k, s, p = case
    r = np.random.default_rng(4)
    x = r.normal(size=(N, Ci) + size)
    w = r.normal(size=(Ci, Co) + k)
    b = r.normal(size=Co)
    out, cache = ops.deconv3d_forward(x, w, b, s, p)
    g = r.normal(size=out.shape)

    def f():
        return np.sum(ops.deconv3d_forward(x, w, b, s, p)[0] * g)

    gx, gw, gb = ops.deconv3d_backward(g, cache)
    assert rel_err(gx, numeric_grad(f, x)) < 1e-4
    assert rel_err(gw, numeric_grad(f, w)) < 1e-4
    assert rel_err(gb, numeric_grad(f, b)) < 1e-4


INCEPTION_CASES = [
    # (N, Ci, Co_each, T, R, A, kernels)
    (1, 1, 1, 5, 3, 3, (1, 3, 5)),
    (1, 2, 2, 6, 4, 4, (3, 5, 7)),
    (2, 2, 1, 5, 3, 4, (1, 3, 5)),
    (1, 3, 2, 7, 3, 3, (3, 5, 7)),
    (1, 1, 3, 9, 2, 2, (5, 9, 3)),
]


@pytest.mark.parametrize("case", INCEPTION_CASES)
def test_inception_concatenates_branch_convs(case):
    N, Ci, Co, T, R, A, kernels = case
    r = np.random.default_rng(5)
    x = r.normal(size=(N, Ci, T, R, A))
    branches = [(r.normal(size=(Co, Ci, k, 3, 3)), r.normal(size=Co)) for k in kernels]
    out, _ = ops.temporal_inception_forward(x, branches, kernels)
    ref = np.concatenate([naive_conv3d(x, w, b, (1, 1, 1), (k // 2, 1, 1))
                          for (w, b), k in zip(branches, kernels)], axis=1)
    assert np.max(np.abs(out - ref)) < 1e-10


@pytest.mark.parametrize("case", INCEPTION_CASES)
def test_inception_gradients_finite_difference(case):
    N, Ci, Co, T, R, A, kernels = case
    r = np.random.default_rng(6)
    x = r.normal(size=(N, Ci, T, R, A))
    branches = [(r.normal(size=(Co, Ci, k, 3, 3)), r.normal(size=Co)) for k in kernels]
    out, cache = ops.temporal_inception_forward(x, branches, kernels)
    g = r.normal(size=out.shape)

    def f():
        return np.sum(ops.temporal_inception_forward(x, branches, kernels)[0] * g)

    gx, grads = ops.temporal_inception_backward(g, cache)
    assert rel_err(gx, numeric_grad(f, x)) < 1e-4
    for (w, b), (gw, gb) in zip(branches, grads):
        assert rel_err(gw, numeric_grad(f, w)) < 1e-4
        assert rel_err(gb, numeric_grad(f, b)) < 1e-4


@pytest.mark.parametrize("shape", [(3,), (2, 4), (1, 3, 2, 2, 2), (2, 2, 3, 4, 4), (5, 7)])
def test_sigmoid_bce_gradient_finite_difference(shape):
    r = np.random.default_rng(7)
    z = r.normal(scale=2.0, size=shape)
    y = r.uniform(size=shape)
    _, g = ops.sigmoid_bce_with_logits(z, y)

    def f():
        return ops.sigmoid_bce_with_logits(z, y)[0]

    assert rel_err(g, numeric_grad(f, z)) < 1e-4


@pytest.mark.parametrize("shape", [(4,), (3, 3), (2, 2, 2, 3, 3), (1, 3, 4, 2, 2), (6, 2)])
def test_bce_gradient_wrt_prediction(shape):
    r = np.random.default_rng(8)
    p = r.uniform(0.05, 0.95, size=shape)
    y = r.uniform(size=shape)
    _, g = ops.bce_loss(p, y)

    def f():
        return ops.bce_loss(p, y)[0]

    assert rel_err(g, numeric_grad(f, p)) < 1e-4


def test_bce_clamp_keeps_loss_finite():
    loss, g = ops.bce_loss(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
    assert np.isfinite(loss) and np.all(np.isfinite(g))
    with pytest.raises(DimensionError):
        ops.bce_loss(np.zeros(3), np.zeros(4))
    with pytest.raises(ConfigError):
        ops.bce_loss(np.zeros(3) + 0.5, np.zeros(3), reduction="max")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20))
def test_sigmoid_stable_and_bounded(vals):
    s = ops.sigmoid(np.array(vals))
    assert np.all((s >= 0) & (s <= 1)) and np.all(np.isfinite(s))


def test_shape_errors():
    with pytest.raises(DimensionError):
        ops.conv3d_forward(np.zeros((1, 2, 3, 3)), np.zeros((1, 2, 1, 1, 1)))
    with pytest.raises(DimensionError):
        ops.conv3d_forward(np.zeros((1, 2, 3, 3, 3)), np.zeros((1, 3, 1, 1, 1)))
    with pytest.raises(DimensionError):
        ops.conv3d_forward(np.zeros((1, 1, 2, 2, 2)), np.zeros((1, 1, 5, 5, 5)))
    with pytest.raises(ConfigError):
        ops.temporal_inception_forward(np.zeros((1, 1, 5, 3, 3)), [], (1, 3))
