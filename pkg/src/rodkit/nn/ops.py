"""3D convolution, transposed convolution, temporal inception and sigmoid-BCE.

All tensors are laid out ``(batch, channel, time, range, azimuth)``. Convolutions
use cross-correlation semantics and gather windows with
``sliding_window_view`` so each layer is a single ``tensordot``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .._validation import as_triple
from ..exceptions import ConfigError, DimensionError


def conv_output_size(size, kernel, stride, padding):
    return tuple((n + 2 * p - k) // s + 1 for n, k, s, p in zip(size, kernel, stride, padding))


def deconv_output_size(size, kernel, stride, padding):
    return tuple((n - 1) * s - 2 * p + k for n, k, s, p in zip(size, kernel, stride, padding))


def _pad(x, padding):
    if not any(padding):
        return x
    pt, pr, pa = padding
    return np.pad(x, ((0, 0), (0, 0), (pt, pt), (pr, pr), (pa, pa)))


def _windows(xp, kernel, stride, out_size):
    v = sliding_window_view(xp, kernel, axis=(2, 3, 4))
    st, sr, sa = stride
    To, Ro, Ao = out_size
    return v[:, :, : st * (To - 1) + 1: st, : sr * (Ro - 1) + 1: sr, : sa * (Ao - 1) + 1: sa]


def _check_5d(x, name):
    if x.ndim != 5:
        raise DimensionError(f"{name} must be 5-D (batch, C, time, range, azimuth), got {x.shape}")


def conv3d_forward(x, weight, bias=None, stride=1, padding=0):
    """Returns ``(out, cache)``. ``weight`` is ``(C_out, C_in, kt, kr, ka)``."""
    stride, padding = as_triple(stride, "stride"), as_triple(padding, "padding")
    _check_5d(x, "input")
    if weight.ndim != 5 or weight.shape[1] != x.shape[1]:
        raise DimensionError(f"weight {weight.shape} does not fit input channels {x.shape[1]}")
    kernel = weight.shape[2:]
    padded = tuple(n + 2 * p for n, p in zip(x.shape[2:], padding))
    if any(k > n for k, n in zip(kernel, padded)):
        raise DimensionError(f"kernel {kernel} larger than padded input {padded}")
    out_size = conv_output_size(x.shape[2:], kernel, stride, padding)
    xp = _pad(x, padding)
    v = _windows(xp, kernel, stride, out_size)
    out = np.tensordot(v, weight, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
    out = np.moveaxis(out, 4, 1)
    if bias is not None:
        out = out + bias.reshape(1, -1, 1, 1, 1)
    return np.ascontiguousarray(out), (xp, x.shape, weight, stride, padding)


def conv3d_backward(grad_out, cache):
    """Gradients ``(grad_x, grad_weight, grad_bias)`` of :func:`conv3d_forward`."""
    xp, x_shape, weight, stride, padding = cache
    kernel = weight.shape[2:]
    out_size = grad_out.shape[2:]
    if grad_out.shape[:2] != (x_shape[0], weight.shape[0]) or out_size != conv_output_size(
            x_shape[2:], kernel, stride, padding):
        raise DimensionError(f"grad_out shape {grad_out.shape} does not match forward output")
    v = _windows(xp, kernel, stride, out_size)
    grad_w = np.tensordot(grad_out, v, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    grad_b = grad_out.sum(axis=(0, 2, 3, 4))
    # col2im: scatter each kernel tap back onto the padded input grid
    cols = np.tensordot(weight, grad_out, axes=([0], [1]))  # (C_in, kt, kr, ka, N, To, Ro, Ao)
    gxp = np.zeros((xp.shape[1], xp.shape[0]) + xp.shape[2:], dtype=grad_out.dtype)
    st, sr, sa = stride
    To, Ro, Ao = out_size
    for a in range(kernel[0]):
        for b in range(kernel[1]):
            for c in range(kernel[2]):
                gxp[:, :, a: a + st * (To - 1) + 1: st, b: b + sr * (Ro - 1) + 1: sr,
                    c: c + sa * (Ao - 1) + 1: sa] += cols[:, a, b, c]
    pt, pr, pa = padding
    T, R, A = x_shape[2:]
    grad_x = gxp[:, :, pt: pt + T, pr: pr + R, pa: pa + A].transpose(1, 0, 2, 3, 4)
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def deconv3d_forward(x, weight, bias=None, stride=1, padding=0):
    """Transposed 3D convolution. ``weight`` is ``(C_in, C_out, kt, kr, ka)``.

    Output size per axis is ``(n - 1) * stride - 2 * padding + kernel``.
    """
    stride, padding = as_triple(stride, "stride"), as_triple(padding, "padding")
    _check_5d(x, "input")
    if weight.ndim != 5 or weight.shape[0] != x.shape[1]:
        raise DimensionError(f"weight {weight.shape} does not fit input channels {x.shape[1]}")
    kernel = weight.shape[2:]
    out_size = deconv_output_size(x.shape[2:], kernel, stride, padding)
    if any(n < 1 for n in out_size):
        raise DimensionError(f"padding {padding} too large for kernel {kernel}")
    full = tuple((n - 1) * s + k for n, s, k in zip(x.shape[2:], stride, kernel))
    cols = np.tensordot(weight, x, axes=([0], [1]))  # (C_out, kt, kr, ka, N, T, R, A)
    acc = np.zeros((weight.shape[1], x.shape[0]) + full, dtype=np.result_type(x, weight))
    st, sr, sa = stride
    T, R, A = x.shape[2:]
    for a in range(kernel[0]):
        for b in range(kernel[1]):
            for c in range(kernel[2]):
                acc[:, :, a: a + st * (T - 1) + 1: st, b: b + sr * (R - 1) + 1: sr,
                    c: c + sa * (A - 1) + 1: sa] += cols[:, a, b, c]
    pt, pr, pa = padding
    out = acc[:, :, pt: full[0] - pt, pr: full[1] - pr, pa: full[2] - pa].transpose(1, 0, 2, 3, 4)
    if bias is not None:
        out = out + bias.reshape(1, -1, 1, 1, 1)
    return np.ascontiguousarray(out), (x, weight, stride, padding)


def deconv3d_backward(grad_out, cache):
    x, weight, stride, padding = cache
    kernel = weight.shape[2:]
    want = (x.shape[0], weight.shape[1]) + deconv_output_size(x.shape[2:], kernel, stride, padding)
    if grad_out.shape != want:
        raise DimensionError(f"grad_out shape {grad_out.shape} != {want}")
    gfull = _pad(grad_out, padding)
    full = tuple((n - 1) * s + k for n, s, k in zip(x.shape[2:], stride, kernel))
    if gfull.shape[2:] != full:
        # odd padding/stride combinations leave an unused tail on the full grid
        pad_tail = [(0, 0), (0, 0)] + [(0, f - g) for f, g in zip(full, gfull.shape[2:])]
        gfull = np.pad(gfull, pad_tail)
    v = _windows(gfull, kernel, stride, x.shape[2:])
    grad_x = np.moveaxis(np.tensordot(v, weight, axes=([1, 5, 6, 7], [1, 2, 3, 4])), 4, 1)
    grad_w = np.tensordot(x, v, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    grad_b = grad_out.sum(axis=(0, 2, 3, 4))
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def inception_padding(kernel):
    return tuple(k // 2 for k in kernel)


def temporal_inception_forward(x, branches, kernels=(5, 9, 13), spatial=3):
    """Parallel same-padded convs with temporal extents ``kernels``, concatenated
    along channels. ``branches`` is a list of ``(weight, bias)`` pairs."""
    if len(branches) != len(kernels):
        raise ConfigError("one (weight, bias) pair is needed per temporal kernel")
    outs, caches = [], []
    for (w, b), kt in zip(branches, kernels):
        if w.shape[2:] != (kt, spatial, spatial):
            raise DimensionError(f"branch weight {w.shape} does not match kernel ({kt},{spatial},{spatial})")
        if w.shape[1] != x.shape[1]:
            raise DimensionError("branch input channels do not match input")
        o, c = conv3d_forward(x, w, b, 1, inception_padding(w.shape[2:]))
        outs.append(o)
        caches.append(c)
    sizes = [o.shape[1] for o in outs]
    return np.concatenate(outs, axis=1), (caches, sizes)


def temporal_inception_backward(grad_out, cache):
    caches, sizes = cache
    splits = np.split(grad_out, np.cumsum(sizes)[:-1], axis=1)
    grad_x = None
    grads = []
    for g, c in zip(splits, caches):
        gx, gw, gb = conv3d_backward(np.ascontiguousarray(g), c)
        grad_x = gx if grad_x is None else grad_x + gx
        grads.append((gw, gb))
    return grad_x, grads


def sigmoid(z):
    z = np.asarray(z)
    out = np.empty_like(z, dtype=np.result_type(z, np.float32))
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(pred, target, eps=1e-7, reduction="sum"):
    """Binary cross entropy and its gradient with respect to ``pred``.

    ``pred`` is clamped to ``[eps, 1 - eps]``; the gradient is zero where the
    clamp is active. ``reduction="sum"`` is the canonical form.
    """
    pred = np.asarray(pred)
    if pred.dtype.kind != "f":
        pred = pred.astype(np.float64)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    p = np.clip(pred, eps, 1 - eps)
    loss = -np.sum(target * np.log(p) + (1 - target) * np.log1p(-p), dtype=np.float64)
    grad = (-target / p + (1 - target) / (1 - p)) * ((pred >= eps) & (pred <= 1 - eps))
    if reduction == "mean":
        return loss / pred.size, grad / pred.size
    if reduction != "sum":
        raise ConfigError(f"unknown reduction {reduction!r}")
    return float(loss), grad


def sigmoid_bce_with_logits(logits, target, eps=1e-7):
    """Sum-reduced BCE of ``sigmoid(logits)`` and its gradient wrt the logits.

    Where the clamp is inactive the gradient reduces to ``sigmoid(z) - target``.
    """
    p = sigmoid(logits)
    loss, _ = bce_loss(p, target, eps)
    active = (p >= eps) & (p <= 1 - eps)
    return loss, (p - target) * active
