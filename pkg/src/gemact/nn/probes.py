"""Experiments on gradient flow: depth-compounded suppression and dead units."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .. import kernels
from ..core import ActivationSpec, _spec_of, check_order
from .network import DenseLayer, DenseNet, softmax_cross_entropy
from .prng import Xoshiro256

PROBE_HEADER = "n,depth,mean_log_gain_per_layer,log_product,samples"


class SuppressionProbeResult(NamedTuple):
    n: int
    depth: int
    mean_log_gain_per_layer: float
    log_product: float
    samples: int

    def csv(self) -> str:
        return f"{self.n},{self.depth},{self.mean_log_gain_per_layer!r},{self.log_product!r},{self.samples}"


def suppression_probe(n: int, depth: int, samples: int, seed: int = 0) -> SuppressionProbeResult:
    """Monte-Carlo estimate of how much GEM's slope shrinks a gradient per layer.

    Each of ``depth`` layers draws its own standard-normal pre-activations.
    Only units with a non-zero slope pass gradient, so the per-layer gain is
    ``E[log gem'(x) | gem'(x) > 0]``; ``log_product`` sums the per-layer
    means, i.e. the log of the expected product along a live path.
    ``mean_log_gain_per_layer`` is ``log_product / depth``.
    """
    n = check_order(n)
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    spec = ActivationSpec.gem(n)
    rng = Xoshiro256(seed)
    ones = np.ones(samples)
    total = 0.0
    for _ in range(depth):
        x = rng.standard_normal(samples)
        slope = kernels.apply_backward_direct(ones, x, spec)
        live = slope[slope > 0.0]
        total += float(np.mean(np.log(live)))
    return SuppressionProbeResult(n, depth, total / depth, total, samples)


@dataclass
class DeadNeuronResult:
    spec: ActivationSpec
    first_layer_grad_abs_sum: float
    units_with_gradient: int
    units: int
    steps: int
    weights_moved: bool


def dead_neuron_experiment(spec, seed: int = 0, n_samples: int = 256, width: int = 16, bias: float = -6.0, lr: float = 0.1, batch_size: int = 32):
    """One epoch of SGD on a net whose first hidden layer starts fully negative.

    Inputs are uniform on [-1, 1]^2, first-layer weights are U(-0.5, 0.5)
    and biases ``bias``, so every first-layer pre-activation is below zero at
    the start.  For a spec whose negative branch has zero slope the first
    layer can never receive gradient; a spec with a live negative branch can.
    """
    spec = _spec_of(spec)
    rng = Xoshiro256(seed)
    x = rng.uniform(-1.0, 1.0, (n_samples, 2))
    y = (x[:, 0] * x[:, 1] > 0).astype(np.int64)
    w1 = rng.uniform(-0.5, 0.5, (width, 2))
    b1 = np.full(width, bias)
    bound = math.sqrt(3.0 / width)
    w2 = rng.uniform(-bound, bound, (2, width))
    net = DenseNet([DenseLayer(w1, b1, spec), DenseLayer(w2, np.zeros(2), None)])
    start = w1.copy()
    grad_sum = np.zeros_like(w1)
    order = rng.permutation(n_samples)
    steps = 0
    for lo in range(0, n_samples, batch_size):
        idx = order[lo : lo + batch_size]
        logits, tape = net.forward(x[idx])
        _, g = softmax_cross_entropy(logits, y[idx])
        grads = net.backward(tape, g)
        grad_sum += np.abs(grads[0]["weights"])
        for layer, gl in zip(net.layers, grads):
            for name, arr in layer.parameters().items():
                arr -= lr * gl[name]
        net.mark_updated()
        steps += 1
    live_units = int(np.count_nonzero(grad_sum.sum(axis=1)))
    return DeadNeuronResult(
        spec,
        float(grad_sum.sum()),
        live_units,
        width,
        steps,
        not np.array_equal(start, net.layers[0].weights),
    )
