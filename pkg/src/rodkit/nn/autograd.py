"""Minimal reverse-mode tape over the ops in :mod:`rodkit.nn.ops`."""

from __future__ import annotations

from . import ops


class Var:
    __slots__ = ("data", "grad", "parents", "backward_fn")

    def __init__(self, data, parents=(), backward_fn=None):
        self.data = data
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape


def _topo(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(outputs, grads):
    """Accumulate gradients into every ``Var`` reachable from ``outputs``."""
    root = Var(None, tuple(outputs), lambda g: grads)
    for node in reversed(_topo(root)):
        g = grads if node is root else node.grad
        if node.backward_fn is None or g is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None:
                continue
            parent.grad = pg if parent.grad is None else parent.grad + pg


def conv3d(x, w, b, stride, padding):
    out, cache = ops.conv3d_forward(x.data, w.data, b.data, stride, padding)
    return Var(out, (x, w, b), lambda g: ops.conv3d_backward(g, cache))


def deconv3d(x, w, b, stride, padding):
    out, cache = ops.deconv3d_forward(x.data, w.data, b.data, stride, padding)
    return Var(out, (x, w, b), lambda g: ops.deconv3d_backward(g, cache))


def inception(x, branch_vars, kernels):
    branches = [(w.data, b.data) for w, b in branch_vars]
    out, cache = ops.temporal_inception_forward(x.data, branches, kernels)

    def back(g):
        gx, grads = ops.temporal_inception_backward(g, cache)
        flat = [gx]
        for gw, gb in grads:
            flat += [gw, gb]
        return flat

    parents = (x,) + tuple(v for pair in branch_vars for v in pair)
    return Var(out, parents, back)


def relu(x):
    mask = x.data > 0
    return Var(x.data * mask, (x,), lambda g: (g * mask,))


def add(a, b):
    return Var(a.data + b.data, (a, b), lambda g: (g, g))

