"""Independent numerical oracles for the closed-form results in :mod:`gemact.core`.

Nothing here calls the closed form it is checking: derivatives are compared
against finite differences of the forward functions, the l^p distance against
adaptive quadrature of its integrand, and extrema against golden-section
search.  All oracles run in double precision.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple

from scipy import integrate

from . import core
from .core import DivergenceError, check_eps, check_order

__all__ = [
    "FiniteDiffConfig",
    "FiniteDiffError",
    "QuadratureResult",
    "CheckResult",
    "REPORT_HEADER",
    "finite_diff",
    "finite_diff_estimate",
    "one_sided_diff",
    "lp_distance_quadrature",
    "maximize_unimodal",
    "minimize_unimodal",
    "vanishing_derivative_scan",
    "junction_scan",
    "run_suite",
    "SUITES",
    "write_report",
]

MACHINE_EPS = 2.220446049250313e-16
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
REPORT_HEADER = ["check_id", "inputs", "expected", "got", "abs_err", "rel_err", "pass/fail"]


class FiniteDiffError(ValueError):
    """A finite-difference stencil hit a non-finite function value."""


@dataclass(frozen=True)
class FiniteDiffConfig:
    """Central-difference settings.

    ``order`` goes up to 8 so that order 2N+1 can be probed for N = 3.
    Each Richardson level halves the step.
    """

    order: int = 1
    base_step: float = 1e-3
    richardson_levels: int = 2

    def __post_init__(self):
        if not 1 <= self.order <= 8:
            raise ValueError(f"order must lie in [1, 8], got {self.order}")
        if not 1e-6 <= self.base_step <= 1e-1:
            raise ValueError(f"base_step must lie in [1e-6, 1e-1], got {self.base_step}")
        if not 0 <= self.richardson_levels <= 4:
            raise ValueError(f"richardson_levels must lie in [0, 4], got {self.richardson_levels}")


class FiniteDiffEstimate(NamedTuple):
    value: float
    error: float  # Richardson truncation estimate + rounding bound


def _eval(f, x):
    y = float(f(x))
    if not math.isfinite(y):
        raise FiniteDiffError(f"f({x!r}) = {y!r} is not finite")
    return y


def _central(f, x, k, h):
    """k-th central difference divided by h**k, plus its rounding bound.

    Uses offsets (k/2 - j) h for j = 0..k, i.e. half-integer offsets for odd k.
    """
    total = 0.0
    mag = 0.0
    for j in range(k + 1):
        w = (-1) ** j * math.comb(k, j)
        fx = _eval(f, x + (k / 2 - j) * h)
        total += w * fx
        mag += abs(w * fx)
    scale = h**k
    return total / scale, 4 * MACHINE_EPS * mag / scale


def _one_sided(f, x, k, h, side):
    total = 0.0
    mag = 0.0
    for j in range(k + 1):
        w = (-1) ** (k - j) * math.comb(k, j)
        fx = _eval(f, x + side * j * h)
        total += w * fx
        mag += abs(w * fx)
    scale = (side * h) ** k
    return total / scale, 4 * MACHINE_EPS * mag / abs(scale)


def _richardson(stencil, h, levels, power_step, ratio_base):
    """Neville-style extrapolation on steps h, h/2, ...; error terms in powers of h**power_step."""
    rows = []
    rounding = 0.0
    for i in range(levels + 1):
        v, r = stencil(h / 2**i)
        rounding = max(rounding, r)
        row = [v]
        for m in range(1, i + 1):
            fac = ratio_base ** (power_step * m)
            row.append((fac * row[m - 1] - rows[i - 1][m - 1]) / (fac - 1))
        rows.append(row)
    best = rows[-1][-1]
    if levels == 0:
        trunc = 0.0
    else:
        trunc = abs(best - rows[-2][-1])
    # extrapolation amplifies rounding by at most about the sum of |coefficients|
    return FiniteDiffEstimate(best, trunc + rounding * (1 + levels))


def finite_diff_estimate(f: Callable[[float], float], x: float, cfg: FiniteDiffConfig = FiniteDiffConfig()):
    """Like :func:`finite_diff` but also returns an error estimate.

    Error model: a central stencil has truncation error O(h**2), and each
    Richardson level removes one more even power, so the result is
    O(h**(2 + 2*levels)).
    """
    return _richardson(lambda h: _central(f, x, cfg.order, h), cfg.base_step, cfg.richardson_levels, 2, 2.0)


def finite_diff(f: Callable[[float], float], x: float, cfg: FiniteDiffConfig = FiniteDiffConfig()) -> float:
    """Central-difference estimate of the ``cfg.order``-th derivative of ``f`` at ``x``."""
    return finite_diff_estimate(f, x, cfg).value


def one_sided_diff(f, x: float, order: int, step: float, side: int, levels: int = 3) -> FiniteDiffEstimate:
    """One-sided derivative from samples at ``x, x + side*h, ..., x + side*order*h``.

    Truncation error is O(h) before extrapolation; each level removes one power.
    """
    if side not in (-1, 1):
        raise ValueError("side must be -1 or +1")
    return _richardson(lambda h: _one_sided(f, x, order, h, side), step, levels, 1, 2.0)


# ---------------------------------------------------------------------------
# quadrature


class QuadratureResult(NamedTuple):
    value: float
    abs_error_estimate: float
    subdivisions: int
    converged: bool
    integral: float
    cutoff: float
    tail_bound: float


def lp_distance_quadrature(p: int, n: int, eps: float, tol: float = 1e-8, max_subdivisions: int = 200):
    """l^p distance between ReLU and E-GEM by adaptive quadrature.

    Integrates ``(eps*x / (eps + x**(2N)))**p`` over ``[0, X]`` with
    Gauss-Kronrod (QUADPACK) on geometrically spaced pieces, choosing ``X``
    so that the analytic tail bound ``eps**p X**(1 - p(2N-1)) / (p(2N-1) - 1)``
    is below a tenth of the tolerance.  ``tol`` is relative to the integral,
    since the distance spans many decades across eps.  Returns the p-th root.
    """
    if isinstance(p, bool) or not isinstance(p, int) or p < 1:
        raise ValueError(f"p must be a natural number >= 1, got {p!r}")
    n = check_order(n)
    eps = check_eps(eps)
    if not tol > 0:
        raise ValueError("tol must be positive")
    decay = p * (2 * n - 1) - 1
    if decay <= 0:
        raise DivergenceError(
            f"integrand decays like x**{-p * (2 * n - 1)} for p={p}, N={n}: the integral over [0, inf) diverges"
        )
    two_n = 2 * n

    def integrand(x):
        xp = x**two_n
        if math.isinf(xp):
            return 0.0
        return (eps * x / (eps + xp)) ** p

    def tail(x_cut):
        return eps**p * x_cut ** (-decay) / decay

    scale = eps ** (1.0 / two_n)  # the integrand peaks near here
    lo = 0.0
    hi = scale / 8
    head = err = 0.0
    pieces = 0
    converged = True
    while True:
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, e, info = integrate.quad(
                    integrand, lo, hi, epsabs=0.0, epsrel=tol / 100, limit=max_subdivisions, full_output=1
                )[:3]
            except integrate.IntegrationWarning:
                converged = False
                val, e, info = integrate.quad(
                    integrand, lo, hi, epsabs=0.0, epsrel=tol / 100, limit=max_subdivisions, full_output=1
                )[:3]
        head += val
        err += e
        pieces += info["last"]
        if head > 0 and tail(hi) <= tol * head / 10:
            break
        lo, hi = hi, hi * 4
        if hi > 1e300:
            converged = False
            break
    bound = tail(hi)
    total_err = err + bound
    converged = converged and total_err <= tol * head
    return QuadratureResult(head ** (1.0 / p), total_err, pieces, converged, head, hi, bound)


# ---------------------------------------------------------------------------
# extremum search


def maximize_unimodal(f: Callable[[float], float], lo: float, hi: float, iters: int = 200, log_scale: bool = False):
    """Golden-section search for the maximum of a unimodal ``f`` on ``[lo, hi]``.

    After ``iters`` iterations the bracket has width ``(hi - lo) * 0.618**iters``
    (measured in log x when ``log_scale`` is set).  Stops early once the
    bracket can no longer shrink in floating point.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if log_scale:
        if lo <= 0:
            raise ValueError("log_scale needs lo > 0")

        def g(t):
            return f(math.exp(t))

        t, val = maximize_unimodal(g, math.log(lo), math.log(hi), iters)
        return math.exp(t), val

    def ev(x):
        y = float(f(x))
        if not math.isfinite(y):
            raise ValueError(f"f({x!r}) = {y!r} is not finite")
        return y

    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = ev(c), ev(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            if not a < c < d:
                break
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            if not c < d < b:
                break
            fd = ev(d)
    return (c, fc) if fc >= fd else (d, fd)


def minimize_unimodal(f, lo, hi, iters=200, log_scale=False):
    x, v = maximize_unimodal(lambda t: -f(t), lo, hi, iters, log_scale)
    return x, -v


# ---------------------------------------------------------------------------
# scans used by the smoothness suite


class ScanResult(NamedTuple):
    order: int
    steps: tuple
    estimates: tuple
    observed_orders: tuple
    vanishes: bool


def vanishing_derivative_scan(f, order: int, steps: Iterable[float] = (0.1, 0.05, 0.025, 0.0125), x: float = 0.0):
    """Central-difference estimates of ``f**(order)(x)`` for shrinking steps.

    If ``f`` behaves like ``c * |x|**m`` near ``x`` with ``m > order``, the
    estimates shrink like ``h**(m - order)``.  The scan reports the observed
    convergence order between consecutive steps; the derivative is taken to
    vanish when every observed order is at least 0.9 (estimates drop by about
    half or more per halving) or the estimates are exactly zero.
    """
    steps = tuple(float(h) for h in steps)
    if order >= 4 and min(steps) < 1e-2:
        raise ValueError("orders >= 4 need steps >= 1e-2 in double precision")
    est = tuple(_central(f, x, order, h)[0] for h in steps)
    obs = []
    for (h0, d0), (h1, d1) in zip(zip(steps, est), zip(steps[1:], est[1:])):
        if d0 == 0.0 and d1 == 0.0:
            obs.append(math.inf)
        elif d1 == 0.0:
            obs.append(math.inf)
        elif d0 == 0.0:
            obs.append(-math.inf)
        else:
            obs.append(math.log(abs(d0) / abs(d1)) / math.log(h0 / h1))
    vanishes = all(o >= 0.9 for o in obs)
    return ScanResult(order, steps, est, tuple(obs), vanishes)


class JunctionResult(NamedTuple):
    order: int
    left: float
    right: float
    jump: float
    tolerance: float
    agree: bool


def junction_scan(f, order: int, x: float = 0.0, step: float = 0.05, levels: int = 4, margin: float = 10.0):
    """Compare one-sided ``order``-th derivatives of ``f`` on either side of ``x``.

    The sides agree when the extrapolated jump is within ``margin`` times the
    combined error estimate of the two one-sided results.
    """
    left = one_sided_diff(f, x, order, step, -1, levels)
    right = one_sided_diff(f, x, order, step, 1, levels)
    jump = left.value - right.value
    tol = margin * (left.error + right.error)
    return JunctionResult(order, left.value, right.value, jump, tol, abs(jump) <= tol)


# ---------------------------------------------------------------------------
# suites and report


@dataclass
class CheckResult:
    check_id: str
    inputs: str
    expected: float
    got: float
    passed: bool

    @property
    def abs_err(self) -> float:
        return abs(self.got - self.expected)

    @property
    def rel_err(self) -> float:
        if self.expected == 0.0:
            return 0.0 if self.got == 0.0 else math.inf
        return abs(self.got - self.expected) / abs(self.expected)

    def row(self) -> list:
        return [
            self.check_id,
            self.inputs,
            repr(float(self.expected)),
            repr(float(self.got)),
            repr(self.abs_err),
            repr(self.rel_err),
            "pass" if self.passed else "fail",
        ]


def _close(got, expected, rtol, atol=0.0) -> bool:
    return abs(got - expected) <= rtol * abs(expected) + atol


GRID_X = (0.01, 0.1, 1.0, math.sqrt(3.0), 5.0)
GRID_N = (1, 2, 3, 5, 9)
GRID_EPS = (1e-2, 1.0, 10.0)
DERIV_RTOL = 1e-6


def _smooth_radius(x: float, n: int = 1, eps: float = 1.0) -> float:
    """Distance from x to the nearest non-smooth point: the kink at 0 or a complex pole of 1/(eps + z**(2N))."""
    r = eps ** (1.0 / (2 * n))
    pole = complex(math.copysign(r * math.cos(math.pi / (2 * n)), x), r * math.sin(math.pi / (2 * n)))
    return min(abs(x), abs(complex(x, 0.0) - pole))


def _fd(f, x, order, radius) -> FiniteDiffEstimate:
    # stencil kept inside the disc where f is analytic
    if order == 1:
        h, levels = 1e-3 * radius, 3
    else:
        h, levels = 0.25 * radius, 4
    return _richardson(lambda s: _central(f, x, order, s), h, levels, 2, 2.0)


def _deriv_check(cid, inputs, f, x, order, got, radius):
    """Relative error below DERIV_RTOL, except where the oracle itself reads zero.

    When |reference| is within the finite-difference error estimate the
    relative error is meaningless (exact zeros on the clamped branch, stationary
    points, values below double resolution of f); the analytic value must then
    also lie within that estimate of zero.
    """
    ref = _fd(f, x, order, radius)
    if abs(ref.value) <= ref.error:
        ok = abs(got) <= ref.error
    else:
        ok = _close(got, ref.value, DERIV_RTOL)
    return CheckResult(cid, inputs, ref.value, got, ok)


def derivative_checks() -> list[CheckResult]:
    """Analytic derivatives against finite differences of the forward functions."""
    out = []
    xs = [s * x for x in GRID_X for s in (1.0, -1.0)]
    for n in GRID_N:
        for x in xs:
            rad = _smooth_radius(x, n)
            gem = lambda t, n=n: core.gem_forward(t, n)  # noqa: E731
            inp = f"x={x!r};n={n}"
            out.append(_deriv_check("gem_grad_fd", inp, gem, x, 1, core.gem_grad(x, n), rad))
            out.append(_deriv_check("gem_second_fd", inp, gem, x, 2, core.gem_second(x, n), rad))
            for eps in GRID_EPS:
                rad = _smooth_radius(x, n, eps)
                inp = f"x={x!r};n={n};eps={eps!r}"
                egem = lambda t, n=n, eps=eps: core.egem_forward(t, n, eps)  # noqa: E731
                segem = lambda t, n=n, eps=eps: core.segem_forward(t, n, eps)  # noqa: E731
                out.append(_deriv_check("egem_grad_fd", inp, egem, x, 1, core.egem_grad(x, n, eps), rad))
                out.append(_deriv_check("segem_grad_fd", inp, segem, x, 1, core.segem_grad(x, n, eps), rad))
    for kind in core.BASELINES:
        for x in xs:
            f = lambda t, kind=kind: core.baseline(t, kind)  # noqa: E731
            out.append(_deriv_check(f"{kind}_grad_fd", f"x={x!r}", f, x, 1, core.baseline_grad(x, kind), min(abs(x), 1.0)))
    return out


def lipschitz_checks(ns: Iterable[int] = range(1, 10)) -> list[CheckResult]:
    out = []
    for n in ns:
        res = core.lipschitz(n)
        arg, val = maximize_unimodal(lambda t: core.gem_grad(t, n), 1e-3, 1e3, 200, log_scale=True)
        out.append(CheckResult("lipschitz_constant", f"n={n}", val, res.constant, abs(val - res.constant) < 1e-9))
        # a flat maximum pins the argmax only to about sqrt(machine eps)
        out.append(CheckResult("lipschitz_argmax", f"n={n}", arg, res.argmax, _close(res.argmax, arg, 1e-6)))
        slope = core.gem_grad(res.argmax, n)
        out.append(CheckResult("lipschitz_slope_at_argmax", f"n={n}", res.constant, slope, _close(slope, res.constant, 1e-12)))
    return out


def trough_checks(cases=((1, 1.0), (1, 10.0), (1, 1e-2), (2, 1.0), (3, 10.0))) -> list[CheckResult]:
    out = []
    for n, eps in cases:
        t = core.segem_trough(n, eps)
        arg, val = minimize_unimodal(lambda x: core.segem_forward(x, n, eps), -10 * max(1.0, eps), 0.0, 200)
        out.append(CheckResult("segem_trough_depth", f"n={n};eps={eps!r}", val, t.depth, abs(val - t.depth) < 1e-9))
        out.append(CheckResult("segem_trough_argmin", f"n={n};eps={eps!r}", arg, t.argmin, _close(t.argmin, arg, 1e-6)))
    return out


def example_checks() -> list[CheckResult]:
    """Reference values that are exact by rational arithmetic or quoted figures."""
    s3 = math.sqrt(3.0)
    cases = [
        ("gem_forward", "x=2;n=1", 1.6, core.gem_forward(2.0, 1), 1e-15),
        ("gem_gate", "x=3;n=1", 0.9, core.gem_gate(3.0, 1), 1e-15),
        ("gem_grad", "x=sqrt3;n=1", 1.125, core.gem_grad(s3, 1), 1e-12),
        ("gem_grad", "x=1;n=2", 1.5, core.gem_grad(1.0, 2), 1e-15),
        ("gem_grad_from_gate", "g=0.75;n=1", 1.125, core.gem_grad_from_gate(0.75, 1), 1e-15),
        ("gem_second", "x=1;n=1", 0.5, core.gem_second(1.0, 1), 1e-15),
        ("gem_second_from_gate", "x=2;g=0.8;n=1", -0.032, core.gem_second_from_gate(2.0, 0.8, 1), 1e-12),
        ("segem_forward", "x=-1;n=1;eps=1", -0.5, core.segem_forward(-1.0, 1, 1.0), 0.0),
        ("segem_grad", "x=-2;n=1;eps=1", -0.12, core.segem_grad(-2.0, 1, 1.0), 1e-15),
        ("segem_trough_depth", "n=1;eps=10", -1.58, core.segem_trough(1, 10.0).depth, 0.005 / 1.58),
        ("lp_distance_closed", "p=2;n=1;eps=1", math.sqrt(math.pi) / 2, core.lp_distance_closed(2, 1, 1.0), 1e-14),
    ]
    return [CheckResult(cid, inp, exp, got, _close(got, exp, rtol)) for cid, inp, exp, got, rtol in cases]


def distance_checks(ps=(2, 3), ns=(1, 2, 3), epss=(1e-4, 1e-2, 1.0), rtol: float = 1e-4) -> list[CheckResult]:
    out = []
    for p in ps:
        for n in ns:
            for eps in epss:
                q = lp_distance_quadrature(p, n, eps, tol=1e-8)
                closed = core.lp_distance_closed(p, n, eps)
                ok = q.converged and _close(closed, q.value, rtol)
                out.append(CheckResult("lp_distance", f"p={p};n={n};eps={eps!r}", q.value, closed, ok))
    for p, n in ((1, 1),):
        raised = []
        for fn in (core.lp_distance_closed, lp_distance_quadrature):
            try:
                fn(p, n, 1.0)
                raised.append(False)
            except DivergenceError:
                raised.append(True)
        out.append(CheckResult("lp_distance_divergent", f"p={p};n={n}", 2.0, float(sum(raised)), all(raised)))
    for p, n in ((2, 1), (3, 2)):
        vals = [core.lp_distance_closed(p, n, e) for e in (1.0, 1e-2, 1e-4, 1e-6)]
        mono = all(a > b for a, b in zip(vals, vals[1:]))
        out.append(CheckResult("lp_distance_monotone_eps", f"p={p};n={n}", 1.0, float(mono), mono))
    return out


def vanishing_checks(ns=(1, 2, 3)) -> list[CheckResult]:
    """Orders 1..2N of GEM at 0 shrink under refinement; order 2N+1 settles on a constant."""
    out = []
    for n in ns:
        f = lambda t, n=n: core.gem_forward(t, n)  # noqa: E731
        for k in range(1, 2 * n + 2):
            scan = vanishing_derivative_scan(f, k)
            last = scan.estimates[-1]
            if k <= 2 * n:
                out.append(CheckResult("vanishing_derivative", f"n={n};order={k}", 0.0, last, scan.vanishes))
            else:
                # the one-sided x**(2N+1) term leaves (2N+1)!/2 under a central stencil
                limit = math.factorial(k) / 2
                steady = all(abs(o) < 0.1 for o in scan.observed_orders)
                ok = steady and _close(last, limit, 0.05)
                out.append(CheckResult("nonvanishing_derivative", f"n={n};order={k}", limit, last, ok))
    return out


def junction_checks(ns=(1, 2), epss=(1.0,)) -> list[CheckResult]:
    """SE-GEM one-sided derivatives at 0 match through order 2N and split at 2N+1."""
    out = []
    for n in ns:
        for eps in epss:
            f = lambda t, n=n, eps=eps: core.segem_forward(t, n, eps)  # noqa: E731
            for k in range(1, 2 * n + 2):
                j = junction_scan(f, k)
                inp = f"n={n};eps={eps!r};order={k}"
                if k <= 2 * n:
                    out.append(CheckResult("segem_junction_match", inp, j.right, j.left, j.agree))
                else:
                    detectable = abs(j.jump) > 10 * j.tolerance
                    out.append(CheckResult("segem_junction_split", inp, j.right, j.left, detectable))
    return out


def _core_suite():
    return example_checks() + lipschitz_checks() + trough_checks() + derivative_checks()


def _distances_suite():
    return distance_checks()


def _smoothness_suite():
    return vanishing_checks() + junction_checks()


SUITES = {
    "core": _core_suite,
    "distances": _distances_suite,
    "smoothness": _smoothness_suite,
}


def run_suite(name: str) -> list[CheckResult]:
    if name == "all":
        return [r for key in SUITES for r in SUITES[key]()]
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; expected one of core, distances, smoothness, all")
    return SUITES[name]()


def write_report(results: Iterable[CheckResult], stream=None) -> str:
    buf = io.StringIO() if stream is None else stream
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in results:
        w.writerow(r.row())
    return buf.getvalue() if stream is None else ""
