"""GEM, E-GEM and SE-GEM rational activations: scalar math, kernels, oracles and a small trainer."""

from .core import (
    ActivationSpec,
    DivergenceError,
    LipschitzResult,
    activation,
    baseline,
    baseline_grad,
    derivative,
    egem_forward,
    egem_grad,
    gate,
    gem_forward,
    gem_gate,
    gem_grad,
    gem_grad_from_gate,
    gem_second,
    gem_second_from_gate,
    lipschitz,
    lp_distance_closed,
    segem_forward,
    segem_grad,
    segem_trough,
)
from .kernels import GateCache, apply_backward, apply_backward_direct, apply_forward, audit_ops, bench

__version__ = "0.1.0"

__all__ = [
    "ActivationSpec",
    "DivergenceError",
    "GateCache",
    "LipschitzResult",
    "activation",
    "apply_backward",
    "apply_backward_direct",
    "apply_forward",
    "audit_ops",
    "baseline",
    "baseline_grad",
    "bench",
    "derivative",
    "egem_forward",
    "egem_grad",
    "gate",
    "gem_forward",
    "gem_gate",
    "gem_grad",
    "gem_grad_from_gate",
    "gem_second",
    "gem_second_from_gate",
    "lipschitz",
    "lp_distance_closed",
    "segem_forward",
    "segem_grad",
    "segem_trough",
]
