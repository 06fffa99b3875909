"""Scalar definitions of the GEM activation family and its closed-form results.

Every function here works on plain Python floats.  The private ``_*``
primitives are also registered with numba so that :mod:`gemact.kernels`
compiles the very same arithmetic for buffers; keep them free of anything
numba cannot type (no f-strings, no numpy calls, no exceptions).

Three families are implemented:

* GEM, ``max(0, x**(2N+1) / (1 + x**(2N)))``;
* E-GEM, the same with ``eps + x**(2N)`` in the denominator;
* SE-GEM, identity for ``x >= 0`` and ``eps*x / (eps + x**(2N))`` below zero.

ReLU, SiLU and both GELU forms are provided as baselines.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import NamedTuple

from numba.extending import register_jitable

__all__ = [
    "MAX_ORDER",
    "SINGLE_EPS_FLOOR",
    "GELU_TANH_COEF",
    "SQRT_2_OVER_PI",
    "ActivationSpec",
    "LipschitzResult",
    "Trough",
    "DivergenceError",
    "check_order",
    "check_eps",
    "gem_forward",
    "gem_gate",
    "gem_grad",
    "gem_grad_from_gate",
    "gem_second",
    "gem_second_from_gate",
    "egem_forward",
    "egem_gate",
    "egem_grad",
    "egem_grad_from_gate",
    "egem_unclipped",
    "segem_forward",
    "segem_ratio",
    "segem_grad",
    "segem_grad_from_ratio",
    "segem_trough",
    "lipschitz",
    "lp_distance_closed",
    "baseline",
    "baseline_grad",
    "activation",
    "derivative",
    "gate",
]

MAX_ORDER = 64
SINGLE_EPS_FLOOR = 1e-7
SQRT_2_OVER_PI = 0.7978845608028654
GELU_TANH_COEF = 0.044715
_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327

BASELINES = ("relu", "silu", "gelu", "gelu_tanh")
GEM_FAMILY = ("gem", "egem", "segem")
KINDS = BASELINES + GEM_FAMILY


class DivergenceError(ValueError):
    """Raised when an l^p distance to ReLU is requested where the integral diverges."""


def check_order(n) -> int:
    """Validate a smoothness order N and return it as an int."""
    if isinstance(n, bool) or not isinstance(n, int):
        if isinstance(n, float) and n.is_integer():
            n = int(n)
        else:
            raise TypeError(f"smoothness order must be an integer, got {n!r}")
    if not 1 <= n <= MAX_ORDER:
        raise ValueError(f"smoothness order must lie in [1, {MAX_ORDER}], got {n}")
    return n


def check_eps(eps, precision: str = "double") -> float:
    """Validate epsilon; single precision additionally enforces a 1e-7 floor."""
    eps = float(eps)
    if not (eps > 0.0 and math.isfinite(eps)):
        raise ValueError(f"epsilon must be a positive finite number, got {eps!r}")
    if precision == "single" and eps < SINGLE_EPS_FLOOR:
        raise ValueError(
            f"epsilon={eps!r} is below the single-precision floor {SINGLE_EPS_FLOOR}; "
            "eps + x**(2N) cannot resolve it in float32"
        )
    if precision not in ("single", "double"):
        raise ValueError(f"precision must be 'single' or 'double', got {precision!r}")
    return eps


_SPEC_RE = re.compile(r"^\s*([a-z_]+)\s*(?::\s*(.*))?$")


@dataclass(frozen=True)
class ActivationSpec:
    """One activation: a baseline or a GEM-family member with its ``n`` and ``eps``.

    Baselines ignore ``n`` and ``eps``; they are normalised to 1 so that
    equality and hashing only see meaningful parameters.  Plain GEM is E-GEM
    with ``eps = 1`` and is stored that way.
    """

    kind: str
    n: int = 1
    eps: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.kind in BASELINES:
            object.__setattr__(self, "n", 1)
            object.__setattr__(self, "eps", 1.0)
            return
        object.__setattr__(self, "n", check_order(self.n))
        if self.kind == "gem":
            if float(self.eps) != 1.0:
                raise ValueError("plain GEM has eps fixed at 1; use kind='egem' for other values")
            object.__setattr__(self, "eps", 1.0)
        else:
            object.__setattr__(self, "eps", check_eps(self.eps))

    @classmethod
    def gem(cls, n: int = 1) -> "ActivationSpec":
        return cls("gem", n)

    @classmethod
    def egem(cls, n: int = 1, eps: float = 1.0) -> "ActivationSpec":
        return cls("egem", n, eps)

    @classmethod
    def segem(cls, n: int = 1, eps: float = 1.0) -> "ActivationSpec":
        return cls("segem", n, eps)

    @property
    def is_gem_family(self) -> bool:
        return self.kind in GEM_FAMILY

    @classmethod
    def parse(cls, text: str) -> "ActivationSpec":
        """Parse ``relu | silu | gelu | gelu_tanh | gem:n=2 | egem:n=1,eps=1e-4 | segem:...``."""
        m = _SPEC_RE.match(text or "")
        if not m:
            raise ValueError(f"cannot parse activation spec {text!r}")
        kind, rest = m.group(1), m.group(2)
        if kind not in KINDS:
            raise ValueError(f"unknown activation {kind!r}; expected one of {', '.join(KINDS)}")
        params = {}
        if rest:
            for item in rest.split(","):
                key, sep, value = item.partition("=")
                key = key.strip()
                if not sep or key not in ("n", "eps") or key in params:
                    raise ValueError(f"bad parameter {item!r} in activation spec {text!r}")
                params[key] = value.strip()
        if kind in BASELINES and params:
            raise ValueError(f"{kind} takes no parameters")
        if kind == "gem" and "eps" in params:
            raise ValueError("gem takes only n; use egem for a custom eps")
        try:
            n = int(params.get("n", "1"))
            eps = float(params.get("eps", "1"))
        except ValueError as exc:
            raise ValueError(f"bad number in activation spec {text!r}") from exc
        return cls(kind, n, eps)

    def __str__(self) -> str:
        if self.kind in BASELINES:
            return self.kind
        if self.kind == "gem":
            return f"gem:n={self.n}"
        return f"{self.kind}:n={self.n},eps={self.eps!r}"


class LipschitzResult(NamedTuple):
    constant: float
    argmax: float


class Trough(NamedTuple):
    argmin: float
    depth: float


# ---------------------------------------------------------------------------
# jit-compatible primitives.  Uniform signature (x, n, eps) so that the
# kernels can treat every activation alike.  Forward primitives return
# (value, cache) where cache is the gate/ratio the cached backward consumes.


@register_jitable
def _pow_even(x, n):
    """x**(2n) by square-and-multiply on x*x."""
    base = x * x
    while not n & 1:
        base = base * base
        n >>= 1
    result = base
    n >>= 1
    while n:
        base = base * base
        if n & 1:
            result = result * base
        n >>= 1
    return result


@register_jitable
def _egem_fwd(x, n, eps):
    p = _pow_even(x, n)
    d = eps + p
    if math.isfinite(d):
        g = p / d
    else:
        # x**(2N) overflowed: eps / x**(2N) == eps * (1/x)**(2N)
        g = 1.0 / (1.0 + eps * _pow_even(1.0 / x, n))
    # written so that NaN falls through to the formula and propagates
    if x <= 0.0:
        return 0.0, 0.0
    return x * g, g


@register_jitable
def _egem_grad(x, n, eps):
    p = _pow_even(x, n)
    d = eps + p
    if math.isfinite(d):
        val = (p / d) * ((p + (2 * n + 1) * eps) / d)
    else:
        e = eps * _pow_even(1.0 / x, n)
        val = (1.0 / (1.0 + e)) * ((1.0 + (2 * n + 1) * e) / (1.0 + e))
    if x <= 0.0:
        return 0.0
    return val


@register_jitable
def _egem_cached(g, n, eps):
    # (2N+1) g - 2N g^2, arranged so the O(1) part is added last
    return g + (2 * n) * (g * (1.0 - g))


@register_jitable
def _gem_second(x, n, eps):
    p = _pow_even(x, n)
    d = eps + p
    if math.isfinite(d):
        g = p / d
        r = eps / d
    else:
        e = eps * _pow_even(1.0 / x, n)
        g = 1.0 / (1.0 + e)
        r = e / (1.0 + e)
    if x <= 0.0:
        return 0.0
    return (2 * n) * (g / x) * r * ((2 * n + 1) * r - (2 * n - 1) * g)


@register_jitable
def _segem_fwd(x, n, eps):
    p = _pow_even(x, n)
    d = eps + p
    if math.isfinite(d):
        r = eps / d
    else:
        e = eps * _pow_even(1.0 / x, n)
        r = e / (e + 1.0)
    if x >= 0.0:
        return x, 1.0
    return x * r, r


@register_jitable
def _segem_grad(x, n, eps):
    p = _pow_even(x, n)
    d = eps + p
    if math.isfinite(d):
        val = (eps / d) * ((eps - (2 * n - 1) * p) / d)
    else:
        e = eps * _pow_even(1.0 / x, n)
        val = (e / (e + 1.0)) * ((e - (2 * n - 1)) / (e + 1.0))
    if x >= 0.0:
        return 1.0
    return val


@register_jitable
def _segem_cached(r, n, eps):
    return r * (1.0 - (2 * n) * (1.0 - r))


@register_jitable
def _relu_fwd(x, n, eps):
    if x <= 0.0:
        return 0.0, 0.0
    return x, 1.0


@register_jitable
def _relu_grad(x, n, eps):
    if x > 0.0:
        return 1.0
    return 0.0


@register_jitable
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@register_jitable
def _silu_fwd(x, n, eps):
    s = _sigmoid(x)
    return x * s, s


@register_jitable
def _silu_grad(x, n, eps):
    s = _sigmoid(x)
    return s + x * (s * (1.0 - s))


@register_jitable
def _gelu_fwd(x, n, eps):
    phi = 0.5 * math.erfc(-x * _INV_SQRT2)
    return x * phi, phi


@register_jitable
def _gelu_grad(x, n, eps):
    phi = 0.5 * math.erfc(-x * _INV_SQRT2)
    if abs(x) > 40.0:
        return phi
    return phi + x * (_INV_SQRT_2PI * math.exp(-0.5 * x * x))


@register_jitable
def _gelu_tanh_fwd(x, n, eps):
    t = math.tanh(SQRT_2_OVER_PI * (x + GELU_TANH_COEF * (x * x * x)))
    half = 0.5 * (1.0 + t)
    return x * half, half


@register_jitable
def _gelu_tanh_grad(x, n, eps):
    t = math.tanh(SQRT_2_OVER_PI * (x + GELU_TANH_COEF * (x * x * x)))
    sech2 = 1.0 - t * t
    if sech2 == 0.0:
        return 0.5 * (1.0 + t)
    du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_TANH_COEF * (x * x))
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * du


# kind -> (forward, direct derivative, derivative from cache or None)
PRIMITIVES = {
    "relu": (_relu_fwd, _relu_grad, None),
    "silu": (_silu_fwd, _silu_grad, None),
    "gelu": (_gelu_fwd, _gelu_grad, None),
    "gelu_tanh": (_gelu_tanh_fwd, _gelu_tanh_grad, None),
    "gem": (_egem_fwd, _egem_grad, _egem_cached),
    "egem": (_egem_fwd, _egem_grad, _egem_cached),
    "segem": (_segem_fwd, _segem_grad, _segem_cached),
}


# ---------------------------------------------------------------------------
# public scalar API


def gem_forward(x: float, n: int) -> float:
    """GEM activation ``max(0, x**(2N+1) / (1 + x**(2N)))``."""
    return _egem_fwd(float(x), check_order(n), 1.0)[0]


def gem_gate(x: float, n: int) -> float:
    """Log-logistic gate ``x**(2N) / (1 + x**(2N))``; 0 for ``x <= 0``."""
    return _egem_fwd(float(x), check_order(n), 1.0)[1]


def gem_grad(x: float, n: int) -> float:
    return _egem_grad(float(x), check_order(n), 1.0)


def gem_grad_from_gate(g: float, n: int) -> float:
    """First derivative rebuilt from a cached gate value ``g = gem(x) / x``."""
    return _egem_cached(float(g), check_order(n), 1.0)


def gem_second(x: float, n: int) -> float:
    return _gem_second(float(x), check_order(n), 1.0)


def gem_second_from_gate(x: float, g: float, n: int) -> float:
    """Second derivative from the cached gate; needs ``x > 0`` since it divides by x."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"the gate form of the second derivative needs x > 0, got {x!r}")
    n = check_order(n)
    g = float(g)
    return (2 * n / x) * g * (1.0 - g) * ((2 * n + 1) - 4 * n * g)


def egem_forward(x: float, n: int, eps: float) -> float:
    return _egem_fwd(float(x), check_order(n), check_eps(eps))[0]


def egem_gate(x: float, n: int, eps: float) -> float:
    return _egem_fwd(float(x), check_order(n), check_eps(eps))[1]


def egem_grad(x: float, n: int, eps: float) -> float:
    return _egem_grad(float(x), check_order(n), check_eps(eps))


def egem_grad_from_gate(g: float, n: int) -> float:
    return _egem_cached(float(g), check_order(n), 1.0)


def egem_unclipped(x: float, n: int, eps: float) -> float:
    """The rational part ``x**(2N+1) / (eps + x**(2N))`` without the clamp at zero."""
    x = float(x)
    n = check_order(n)
    p = _pow_even(x, n)
    return x * (p / (check_eps(eps) + p))


def segem_forward(x: float, n: int, eps: float) -> float:
    return _segem_fwd(float(x), check_order(n), check_eps(eps))[0]


def segem_ratio(x: float, n: int, eps: float) -> float:
    """``eps / (eps + x**(2N))`` for negative x and 1 otherwise; SE-GEM's cache value."""
    return _segem_fwd(float(x), check_order(n), check_eps(eps))[1]


def segem_grad(x: float, n: int, eps: float) -> float:
    return _segem_grad(float(x), check_order(n), check_eps(eps))


def segem_grad_from_ratio(r: float, n: int) -> float:
    return _segem_cached(float(r), check_order(n), 1.0)


def _root(value: float, k: int) -> float:
    return math.sqrt(value) if k == 2 else value ** (1.0 / k)


def segem_trough(n: int, eps: float) -> Trough:
    """Minimiser and minimum of SE-GEM's negative branch.

    Setting the derivative to zero gives ``x**(2N) = eps / (2N-1)``.
    """
    n = check_order(n)
    eps = check_eps(eps)
    scale = _root(eps / (2 * n - 1), 2 * n)
    return Trough(-scale, -((2 * n - 1) / (2 * n)) * scale)


def lipschitz(n: int) -> LipschitzResult:
    """Maximum slope of GEM, ``(2N+1)**2 / (8N)``, and where it is attained."""
    n = check_order(n)
    return LipschitzResult((2 * n + 1) ** 2 / (8 * n), _root((2 * n + 1) / (2 * n - 1), 2 * n))


def lp_distance_closed(p: int, n: int, eps: float) -> float:
    """Closed-form l^p distance between ReLU and E-GEM.

    Evaluated in log space through ``math.lgamma``.  Finite only when
    ``p*(2N-1) > 1``; otherwise :class:`DivergenceError` is raised.
    """
    if isinstance(p, bool) or not isinstance(p, int) or p < 1:
        raise ValueError(f"p must be a natural number >= 1, got {p!r}")
    n = check_order(n)
    eps = check_eps(eps)
    k = p * (2 * n - 1) - 1
    if k <= 0:
        raise DivergenceError(
            f"l^{p} distance diverges for N={n}: Gamma((p(2N-1)-1)/(2N)) = Gamma({k}/{2 * n}) "
            "sits on a pole and the tail of the integrand decays like 1/x"
        )
    log_gammas = math.lgamma((p + 1) / (2 * n)) + math.lgamma(k / (2 * n)) - math.lgamma(p)
    log_val = (p + 1) / (2 * n * p) * math.log(eps) - math.log(2 * n) / p + log_gammas / p
    return math.exp(log_val)


def _spec_of(spec) -> ActivationSpec:
    if isinstance(spec, ActivationSpec):
        return spec
    if isinstance(spec, str):
        return ActivationSpec.parse(spec)
    raise TypeError(f"expected an ActivationSpec or spec string, got {type(spec).__name__}")


def baseline(x: float, spec) -> float:
    """ReLU, SiLU, exact GELU or tanh-approximated GELU."""
    spec = _spec_of(spec)
    if spec.kind not in BASELINES:
        raise ValueError(f"{spec} is not a baseline activation")
    return PRIMITIVES[spec.kind][0](float(x), 1, 1.0)[0]


def baseline_grad(x: float, spec) -> float:
    """Analytic derivative of a baseline; ReLU'(0) is taken as 0."""
    spec = _spec_of(spec)
    if spec.kind not in BASELINES:
        raise ValueError(f"{spec} is not a baseline activation")
    return PRIMITIVES[spec.kind][1](float(x), 1, 1.0)


def activation(x: float, spec) -> float:
    spec = _spec_of(spec)
    return PRIMITIVES[spec.kind][0](float(x), spec.n, spec.eps)[0]


def derivative(x: float, spec) -> float:
    spec = _spec_of(spec)
    return PRIMITIVES[spec.kind][1](float(x), spec.n, spec.eps)


def gate(x: float, spec) -> float:
    """Multiplicative gate F(x) of the self-gated form ``x * F(x)``.

    For SE-GEM this is the ratio ``segem(x) / x`` (1 on the identity branch).
    """
    spec = _spec_of(spec)
    return PRIMITIVES[spec.kind][0](float(x), spec.n, spec.eps)[1]
