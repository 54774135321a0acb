"""RODNet variants (CDC, HG, HGwI) at desk scale.

An architecture is written once as a function over a small graph builder.
Running it with :class:`_ShapeRecorder` yields the parameter table; running
it with :class:`_Executor` evaluates the network on the autograd tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .._validation import as_triple, check_count
from ..exceptions import ConfigError, DimensionError
from . import autograd as ag
from .ops import sigmoid, sigmoid_bce_with_logits

VARIANTS = ("CDC", "HG", "HGwI")


@dataclass(frozen=True)
class ModelSpec:
    variant: str = "CDC"
    num_stacks: int = 1
    base_channels: int = 8
    snippet_len: int = 16
    num_classes: int = 3
    inception_kernels: tuple = (5, 9, 13)
    in_channels: int = 2

    def __post_init__(self):
        variant = {v.lower(): v for v in VARIANTS}.get(str(self.variant).lower())
        if variant is None:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        object.__setattr__(self, "variant", variant)
        object.__setattr__(self, "inception_kernels", tuple(int(k) for k in self.inception_kernels))
        for name in ("num_stacks", "base_channels", "snippet_len", "num_classes", "in_channels"):
            check_count(name, getattr(self, name))
        if variant == "HGwI" and self.snippet_len < max(self.inception_kernels):
            raise ConfigError(
                f"HGwI needs snippet_len >= {max(self.inception_kernels)}, got {self.snippet_len}")

    @property
    def temporal_stride(self) -> int:
        return 2 if self.snippet_len % 2 == 0 else 1


# -- graph builders ---------------------------------------------------------------

class _ShapeRecorder:
    def __init__(self):
        self.table = []  # (name, shape, kind, fan_in)

    def conv(self, name, x, cin, cout, kernel, stride=1, padding=0):
        k = as_triple(kernel)
        self.table.append((name + ".weight", (cout, cin) + k, "weight", cin * math.prod(k)))
        self.table.append((name + ".bias", (cout,), "bias", 0))
        return x

    def deconv(self, name, x, cin, cout, kernel, stride=1, padding=0):
        k, s = as_triple(kernel), as_triple(stride)
        fan_in = max(1, cin * math.prod(k) // math.prod(s))
        self.table.append((name + ".weight", (cin, cout) + k, "weight", fan_in))
        self.table.append((name + ".bias", (cout,), "bias", 0))
        return x

    def inception(self, name, x, cin, cout_each, kernels):
        for kt in kernels:
            self.conv(f"{name}.t{kt}", x, cin, cout_each, (kt, 3, 3))
        return x

    def relu(self, x):
        return x

    def add(self, a, b):
        return a


class _Executor:
    def __init__(self, params: dict[str, ag.Var]):
        self.p = params

    def conv(self, name, x, cin, cout, kernel, stride=1, padding=0):
        return ag.conv3d(x, self.p[name + ".weight"], self.p[name + ".bias"], stride, padding)

    def deconv(self, name, x, cin, cout, kernel, stride=1, padding=0):
        return ag.deconv3d(x, self.p[name + ".weight"], self.p[name + ".bias"], stride, padding)

    def inception(self, name, x, cin, cout_each, kernels):
        pairs = [(self.p[f"{name}.t{kt}.weight"], self.p[f"{name}.t{kt}.bias"]) for kt in kernels]
        return ag.inception(x, pairs, kernels)

    def relu(self, x):
        return ag.relu(x)

    def add(self, a, b):
        return ag.add(a, b)


def _cdc(spec: ModelSpec, g, x):
    b, ts = spec.base_channels, spec.temporal_stride
    x = g.relu(g.conv("enc1", x, spec.in_channels, b, 3, (1, 2, 2), 1))
    x = g.relu(g.conv("enc2", x, b, 2 * b, 3, (ts, 2, 2), 1))
    x = g.relu(g.conv("enc3", x, 2 * b, 4 * b, 3, 1, 1))
    x = g.relu(g.deconv("dec1", x, 4 * b, 2 * b, (2 + ts, 2, 2), (ts, 2, 2), (1, 0, 0)))
    x = g.relu(g.deconv("dec2", x, 2 * b, b, (3, 2, 2), (1, 2, 2), (1, 0, 0)))
    return [g.conv("head", x, b, spec.num_classes, 1, 1, 0)]


def _hourglass(spec: ModelSpec, g, x, with_inception: bool):
    b = spec.base_channels

    def block(name, h):
        if with_inception:
            h = g.relu(g.inception(name + ".inc", h, b, b, spec.inception_kernels))
            return g.relu(g.conv(name + ".proj", h, len(spec.inception_kernels) * b, b, 1, 1, 0))
        return g.relu(g.conv(name, h, b, b, 3, 1, 1))

    f = g.relu(g.conv("stem", x, spec.in_channels, b, 3, (1, 2, 2), 1))
    heads = []
    for k in range(spec.num_stacks):
        pre = f"hg{k}."
        up1 = block(pre + "up1", f)
        low = g.relu(g.conv(pre + "down", f, b, b, 3, (1, 2, 2), 1))
        low = block(pre + "low1", low)
        low = block(pre + "low2", low)
        up2 = g.relu(g.deconv(pre + "up", low, b, b, (3, 4, 4), (1, 2, 2), 1))
        feat = g.relu(g.conv(pre + "feat", g.add(up1, up2), b, b, 1, 1, 0))
        heads.append(g.deconv(pre + "head", feat, b, spec.num_classes, (3, 4, 4), (1, 2, 2), 1))
        if k < spec.num_stacks - 1:
            f = g.add(f, g.conv(pre + "merge", feat, b, b, 1, 1, 0))
    return heads


def _graph(spec: ModelSpec, g, x):
    if spec.variant == "CDC":
        return _cdc(spec, g, x)
    return _hourglass(spec, g, x, with_inception=spec.variant == "HGwI")


def layer_table(spec: ModelSpec):
    rec = _ShapeRecorder()
    _graph(spec, rec, None)
    return rec.table


def _head_names(spec: ModelSpec):
    if spec.variant == "CDC":
        return ["head"]
    return [f"hg{k}.head" for k in range(spec.num_stacks)]


# -- parameters -------------------------------------------------------------------

class ParamStore:
    """Ordered named parameter tensors of one model variant.

    ``input_norm`` records how network inputs were normalized during
    training (see :class:`rodkit.nn.estimator.InputNorm`); it travels with
    the checkpoint so inference reproduces it.
    """

    def __init__(self, spec: ModelSpec, tensors: dict[str, np.ndarray], input_norm=None):
        self.spec = spec
        self.tensors = dict(tensors)
        self.input_norm = input_norm

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self):
        return list(self.tensors)

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def copy(self) -> "ParamStore":
        return ParamStore(self.spec, {k: v.copy() for k, v in self.tensors.items()},
                          self.input_norm)

    def astype(self, dtype) -> "ParamStore":
        return ParamStore(self.spec, {k: v.astype(dtype) for k, v in self.tensors.items()},
                          self.input_norm)

    def zero_head(self):
        """Zero the final prediction layer(s); outputs become exactly 0.5."""
        for h in _head_names(self.spec):
            self.tensors[h + ".weight"][...] = 0
            self.tensors[h + ".bias"][...] = 0
        return self

    def describe(self) -> str:
        rows = [(n, v.shape, v.size) for n, v in self.tensors.items()]
        w = max(len(n) for n, _, _ in rows)
        lines = [f"# RODNet-{self.spec.variant} stacks={self.spec.num_stacks} "
                 f"base_channels={self.spec.base_channels} snippet_len={self.spec.snippet_len}",
                 f"{'name'.ljust(w)}  {'shape':<24} params"]
        for n, shape, size in rows:
            lines.append(f"{n.ljust(w)}  {'x'.join(map(str, shape)):<24} {size}")
        lines.append(f"{'total'.ljust(w)}  {'':<24} {self.num_parameters()}")
        return "\n".join(lines)


def build_model(spec: ModelSpec, rng_seed: int = 0, dtype=np.float32,
                head_prior: float | None = None) -> ParamStore:
    """Deterministic fan-in scaled uniform init: ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``.

    Biases start at zero. ``head_prior`` sets the output-layer bias to
    ``logit(head_prior)``, so the initial prediction everywhere equals the prior.
    """
    rng = np.random.default_rng(rng_seed)
    tensors = {}
    for name, shape, kind, fan_in in layer_table(spec):
        if kind == "weight":
            bound = math.sqrt(6.0 / fan_in)
            tensors[name] = rng.uniform(-bound, bound, shape).astype(dtype)
        else:
            tensors[name] = np.zeros(shape, dtype=dtype)
    if head_prior is not None:
        if not 0 < head_prior < 1:
            raise ConfigError("head_prior must lie in (0, 1)")
        for h in _head_names(spec):
            tensors[h + ".bias"][...] = math.log(head_prior / (1 - head_prior))
    return ParamStore(spec, tensors)


# -- evaluation ----------------------------------------------------------------------

def check_input(model: ParamStore, x: np.ndarray):
    spec = model.spec
    if x.ndim != 5:
        raise DimensionError(f"input must be (batch, C, tau, range, azimuth), got {x.shape}")
    if x.shape[1] != spec.in_channels or x.shape[2] != spec.snippet_len:
        raise DimensionError(
            f"input {x.shape} does not match spec (C={spec.in_channels}, tau={spec.snippet_len})")
    if x.shape[3] % 4 or x.shape[4] % 4:
        raise DimensionError("range and azimuth sizes must be divisible by 4")


def forward_logits(model: ParamStore, x: np.ndarray, requires_grad: bool = False):
    """Logits of every head; returns ``(heads, leaf_vars)``."""
    check_input(model, x)
    leaves = {k: ag.Var(v) for k, v in model.items()}
    x = np.asarray(x, dtype=next(iter(model.tensors.values())).dtype)
    heads = _graph(model.spec, _Executor(leaves), ag.Var(x))
    if not requires_grad:
        for h in heads:
            h.parents = ()
    return heads, leaves


def forward(model: ParamStore, x: np.ndarray):
    """Sigmoid ConfMap predictions ``(batch, C_cls, tau, R, A)`` and intermediate heads."""
    heads, _ = forward_logits(model, x)
    probs = [sigmoid(h.data) for h in heads]
    return probs[-1], probs[:-1]


def loss_and_grad(model: ParamStore, x: np.ndarray, target: np.ndarray, eps: float = 1e-7):
    """Summed BCE over all heads (equal weights) and gradients keyed by parameter name."""
    heads, leaves = forward_logits(model, x, requires_grad=True)
    if heads[0].shape != target.shape:
        raise DimensionError(f"prediction {heads[0].shape} and target {target.shape} differ")
    total, grads = 0.0, []
    for h in heads:
        loss, g = sigmoid_bce_with_logits(h.data, target, eps)
        total += loss
        grads.append(g.astype(h.data.dtype, copy=False))
    ag.backward(heads, grads)
    return total, {k: (v.grad if v.grad is not None else np.zeros_like(v.data))
                   for k, v in leaves.items()}
