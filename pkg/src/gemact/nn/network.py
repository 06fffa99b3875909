"""Dense networks with hand-written backpropagation.

GEM-family activations keep only their gate cache on the tape; baselines
keep the pre-activation and use the direct derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..core import ActivationSpec, _spec_of
from .prng import Xoshiro256


class StaleTapeError(RuntimeError):
    """The network changed after the forward pass that produced this tape."""


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: ActivationSpec | None = None  # None means identity

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation is not None:
            self.activation = _spec_of(self.activation)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(f"weights {self.weights.shape} and bias {self.bias.shape} are inconsistent")

    @property
    def in_features(self) -> int:
        return self.weights.shape[1]

    @property
    def out_features(self) -> int:
        return self.weights.shape[0]

    def parameters(self) -> dict:
        return {"weights": self.weights, "bias": self.bias}


@dataclass
class GmgluLayer:
    """``gem(x W^T) * (x V^T)`` with GEM of order ``n``; no biases."""

    W: np.ndarray  # (hidden, in)
    V: np.ndarray  # (hidden, in)
    n: int = 1

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.V = np.asarray(self.V, dtype=np.float64)
        self.spec = ActivationSpec.gem(self.n)
        if self.W.ndim != 2 or self.W.shape != self.V.shape:
            raise ValueError(f"W {self.W.shape} and V {self.V.shape} must be matrices of the same shape")

    @property
    def in_features(self) -> int:
        return self.W.shape[1]

    @property
    def out_features(self) -> int:
        return self.W.shape[0]

    def parameters(self) -> dict:
        return {"W": self.W, "V": self.V}


def _check_width(x: np.ndarray, layer) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.in_features:
        raise ValueError(f"expected a batch of width {layer.in_features}, got shape {x.shape}")
    return x


def gmglu_forward(layer: GmgluLayer, x):
    x = _check_width(x, layer)
    u = x @ layer.W.T
    v = x @ layer.V.T
    gated, cache, _ = kernels.apply_forward(u, layer.spec, want_cache=True, check_finite=False)
    return gated * v, (x, gated, v, cache)


def gmglu_backward(layer: GmgluLayer, tape, grad_out):
    x, gated, v, cache = tape
    du = kernels.apply_backward(grad_out * v, cache)
    dv = grad_out * gated
    grads = {"W": du.T @ x, "V": dv.T @ x}
    return grads, du @ layer.W + dv @ layer.V


@dataclass
class Tape:
    entries: list
    version: int
    net_id: int


class DenseNet:
    """A stack of :class:`DenseLayer` / :class:`GmgluLayer`."""

    def __init__(self, layers):
        self.layers = list(layers)
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_features != b.in_features:
                raise ValueError(f"layer widths do not chain: {a.out_features} -> {b.in_features}")
        self.version = 0

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.parameters().values()]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def mark_updated(self) -> None:
        """Invalidate outstanding tapes; call after changing parameters in place."""
        self.version += 1

    def forward(self, batch):
        a = _check_width(batch, self.layers[0])
        entries = []
        for layer in self.layers:
            if isinstance(layer, GmgluLayer):
                a, saved = gmglu_forward(layer, a)
                entries.append(saved)
                continue
            z = a @ layer.weights.T + layer.bias
            spec = layer.activation
            if spec is None:
                entries.append((a, None, None))
                a = z
            elif spec.is_gem_family:
                out, cache, _ = kernels.apply_forward(z, spec, want_cache=True, check_finite=False)
                entries.append((a, cache, None))
                a = out
            else:
                entries.append((a, None, z))
                a = kernels.apply_forward(z, spec, check_finite=False).output
        return a, Tape(entries, self.version, id(self))

    def predict(self, batch) -> np.ndarray:
        return self.forward(batch)[0]

    def backward(self, tape: Tape, grad_logits) -> list[dict]:
        """Parameter gradients, one dict per layer, matching :meth:`parameters` order."""
        if tape.net_id != id(self) or tape.version != self.version:
            raise StaleTapeError("tape does not belong to the current parameters; run forward again")
        g = np.asarray(grad_logits, dtype=np.float64)
        grads = [None] * len(self.layers)
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            if isinstance(layer, GmgluLayer):
                grads[i], g = gmglu_backward(layer, tape.entries[i], g)
                continue
            a, cache, z = tape.entries[i]
            if cache is not None:
                g = kernels.apply_backward(g, cache)
            elif z is not None:
                g = kernels.apply_backward_direct(g, z, layer.activation)
            grads[i] = {"weights": g.T @ a, "bias": g.sum(axis=0)}
            if i:
                g = g @ layer.weights
        return grads


def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(len(labels))
    loss = -log_p[rows, labels].mean()
    grad = np.exp(log_p)
    grad[rows, labels] -= 1.0
    return float(loss), grad / len(labels)


def variance_gain(spec) -> float:
    """``1 / sqrt(E[f(z)**2])`` for standard-normal ``z``, by Gauss-Hermite quadrature.

    Kaiming's fan-in argument with the activation's actual second moment;
    equals sqrt(2) for ReLU.
    """
    if spec is None:
        return 1.0
    spec = _spec_of(spec)
    nodes, weights = np.polynomial.hermite_e.hermegauss(200)
    vals = kernels.apply_forward(nodes, spec).output
    second = float(weights @ vals**2) / math.sqrt(2 * math.pi)
    return 1.0 / math.sqrt(second)


@dataclass
class InitConfig:
    """Kaiming-uniform fan-in initialisation.

    The default gain of 1 is shared by every activation so comparisons stay
    fair; ``gain='variance'`` uses :func:`variance_gain` instead.  Hidden
    biases start at ``bias``; a positive value keeps deep GEM stacks out of
    the flat region around 0 at initialisation.
    """

    gain: float | str = 1.0
    bias: float = 1.0


def init_dense_net(sizes, activation, rng: Xoshiro256, init: InitConfig = InitConfig()) -> DenseNet:
    """MLP with ``len(sizes) - 1`` layers; every layer but the last uses ``activation``.

    Weights are drawn layer by layer from ``rng`` as U(-b, b) with
    ``b = gain * sqrt(3 / fan_in)``, rows first.  The first layer sees raw
    features and always uses gain 1.
    """
    spec = None if activation in (None, "identity") else _spec_of(activation)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        last = i == len(sizes) - 2
        if i == 0:
            gain = 1.0
        elif init.gain == "variance":
            gain = variance_gain(spec)
        else:
            gain = float(init.gain)
        bound = gain * math.sqrt(3.0 / fan_in)
        w = rng.uniform(-bound, bound, (fan_out, fan_in))
        b = np.full(fan_out, 0.0 if last else float(init.bias))
        layers.append(DenseLayer(w, b, None if last else spec))
    return DenseNet(layers)


@dataclass
class GradCheckResult:
    max_rel_err: float
    checked: int
    worst: tuple = field(default_factory=tuple)


def gradient_check(net: DenseNet, x, labels, h: float = 1e-4, max_params: int | None = None, rng=None):
    """Compare backprop gradients with finite differences of the loss, parameter by parameter.

    Uses the five-point stencil, whose O(h**4) truncation lets ``h`` stay
    large enough that rounding (about eps/h) does not swamp small gradients.
    Relative error per parameter is ``|a - n| / max(|a| + |n|, 1e-8)``.
    """
    logits, tape = net.forward(x)
    _, g_logits = softmax_cross_entropy(logits, labels)
    grads = net.backward(tape, g_logits)
    flat = []
    for layer, gl in zip(net.layers, grads):
        for name, arr in layer.parameters().items():
            for idx in np.ndindex(arr.shape):
                flat.append((arr, idx, gl[name][idx]))
    if max_params is not None and len(flat) > max_params:
        rng = rng or Xoshiro256(0)
        pick = rng.permutation(len(flat))[:max_params]
        flat = [flat[i] for i in sorted(pick)]
    worst = (0.0, None)
    for arr, idx, analytic in flat:
        keep = arr[idx]
        losses = []
        for off in (2 * h, h, -h, -2 * h):
            arr[idx] = keep + off
            losses.append(softmax_cross_entropy(net.forward(x)[0], labels)[0])
        arr[idx] = keep
        numeric = (-losses[0] + 8 * losses[1] - 8 * losses[2] + losses[3]) / (12 * h)
        rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-8)
        if rel > worst[0]:
            worst = (rel, (idx, analytic, numeric))
    net.mark_updated()
    return GradCheckResult(worst[0], len(flat), worst[1] or ())
