"""Buffer kernels: element-wise forward/backward, gate caching, op audit and a micro-benchmark.

The compiled loops call the scalar primitives of :mod:`gemact.core`
directly, so a kernel output is bit-identical to mapping the scalar
function over the buffer.  Single-precision buffers are evaluated in double
and rounded once on store.
"""

from __future__ import annotations

import math
import statistics
import time
import types
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from . import core
from .core import ActivationSpec, check_eps, check_order

__all__ = [
    "OpCount",
    "OpAudit",
    "GateCache",
    "ForwardResult",
    "BenchReport",
    "BENCH_HEADER",
    "ERF_IMPL",
    "pow_even",
    "apply_forward",
    "apply_backward",
    "apply_backward_direct",
    "audit_ops",
    "audit_backward",
    "bench",
]

ERF_IMPL = "libm erfc (platform math library via numba/CPython)"
BENCH_HEADER = "spec,elements,iterations,precision,median_ns,gelem_s,gb_s,mul,add,recip,cmp"
_MIN_CHUNK = 1 << 16
_DTYPES = {"single": np.float32, "double": np.float64}


# ---------------------------------------------------------------------------
# compiled loops


def _make_kernels(kind):
    fwd, direct, cached = core.PRIMITIVES[kind]

    @numba.njit(nogil=True)
    def forward(x, out, gates, n, eps, want_cache):
        for i in range(x.size):
            y, g = fwd(np.float64(x[i]), n, eps)
            out[i] = y
            if want_cache:
                gates[i] = g

    @numba.njit(nogil=True)
    def backward_direct(grad, x, out, n, eps):
        for i in range(x.size):
            out[i] = np.float64(grad[i]) * direct(np.float64(x[i]), n, eps)

    backward_cached = None
    if cached is not None:

        @numba.njit(nogil=True)
        def backward_cached(grad, gates, out, n, eps):
            for i in range(gates.size):
                out[i] = np.float64(grad[i]) * cached(np.float64(gates[i]), n, eps)

    return forward, backward_direct, backward_cached


_KERNELS: dict = {}


def _kernels(kind):
    if kind not in _KERNELS:
        _KERNELS[kind] = _make_kernels(kind)
    return _KERNELS[kind]


# ---------------------------------------------------------------------------
# buffer handling


def _as_buffer(data, name: str, check_finite: bool = True) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    arr = np.ascontiguousarray(arr)
    if check_finite and arr.size and not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _precision_of(arr: np.ndarray) -> str:
    return "single" if arr.dtype == np.float32 else "double"


def _check_spec(spec, precision: str) -> ActivationSpec:
    spec = core._spec_of(spec)
    if spec.kind in ("egem", "segem"):
        check_eps(spec.eps, precision)
    return spec


def _run_chunked(kernel, arrays, extra, workers: int | None) -> None:
    """Call ``kernel`` on aligned slices of ``arrays``; chunks are independent."""
    size = arrays[0].size
    workers = 1 if workers is None else max(1, int(workers))
    if workers == 1 or size < 2 * _MIN_CHUNK:
        kernel(*arrays, *extra)
        return
    step = max(_MIN_CHUNK, -(-size // workers))
    bounds = [(lo, min(lo + step, size)) for lo in range(0, size, step)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        jobs = [pool.submit(kernel, *(a[lo:hi] for a in arrays), *extra) for lo, hi in bounds]
        for job in jobs:
            job.result()


@dataclass(frozen=True)
class GateCache:
    """Per-element forward ratio kept for the cheap backward pass.

    For GEM/E-GEM ``gates[i]`` is the gate ``y/x`` (0 for ``x <= 0``).  For
    SE-GEM it is ``eps / (eps + x**(2N))`` on the negative side and 1 on the
    identity side, which makes the reconstruction formula give exactly 1
    there without a separate sign bit.
    """

    gates: np.ndarray
    spec: ActivationSpec

    def __len__(self) -> int:
        return self.gates.size


class ForwardResult(NamedTuple):
    output: np.ndarray
    cache: GateCache | None
    cache_omitted: bool


def apply_forward(
    data,
    spec,
    want_cache: bool = False,
    *,
    out: np.ndarray | None = None,
    workers: int | None = 1,
    check_finite: bool = True,
) -> ForwardResult:
    """Apply an activation element-wise.

    Float32 input gives float32 output; anything else is computed as float64.
    Asking for a cache with a baseline spec does not fail: the result carries
    ``cache_omitted=True`` instead.
    """
    x = _as_buffer(data, "input", check_finite)
    spec = _check_spec(spec, _precision_of(x))
    forward = _kernels(spec.kind)[0]
    omitted = bool(want_cache) and not spec.is_gem_family
    keep = bool(want_cache) and spec.is_gem_family
    if out is None:
        out = np.empty_like(x)
    elif out.shape != x.shape or out.dtype != x.dtype or not out.flags.c_contiguous:
        raise ValueError("out must be a contiguous buffer with the input's shape and dtype")
    gates = np.empty_like(x) if keep else np.empty(0, dtype=x.dtype)
    flat_g = gates.reshape(-1) if keep else gates
    if keep:
        _run_chunked(forward, (x.reshape(-1), out.reshape(-1), flat_g), (spec.n, spec.eps, True), workers)
    else:
        _run_chunked(
            lambda a, o, n, e: forward(a, o, gates, n, e, False),
            (x.reshape(-1), out.reshape(-1)),
            (spec.n, spec.eps),
            workers,
        )
    return ForwardResult(out, GateCache(gates, spec) if keep else None, omitted)


def apply_backward(grad_out, cache: GateCache, spec=None, *, workers: int | None = 1) -> np.ndarray:
    """Input gradient from the stored gates only; the forward input is not needed."""
    if not isinstance(cache, GateCache):
        raise TypeError("cache must be a GateCache produced by apply_forward")
    spec = cache.spec if spec is None else core._spec_of(spec)
    if spec != cache.spec:
        raise ValueError(f"cache was produced for {cache.spec}, not {spec}")
    if not spec.is_gem_family:
        raise ValueError(f"{spec} has no gate-cached backward; use apply_backward_direct")
    grad = _as_buffer(grad_out, "grad_out")
    if grad.shape != cache.gates.shape:
        raise ValueError(f"grad_out shape {grad.shape} does not match cache shape {cache.gates.shape}")
    kernel = _kernels(spec.kind)[2]
    res = np.empty(grad.shape, dtype=np.result_type(grad.dtype, cache.gates.dtype))
    _run_chunked(kernel, (grad.reshape(-1), cache.gates.reshape(-1), res.reshape(-1)), (spec.n, spec.eps), workers)
    return res


def apply_backward_direct(grad_out, saved_input, spec, *, workers: int | None = 1) -> np.ndarray:
    """Input gradient by evaluating the analytic derivative at the saved input."""
    x = _as_buffer(saved_input, "saved_input")
    grad = _as_buffer(grad_out, "grad_out")
    if grad.shape != x.shape:
        raise ValueError(f"grad_out shape {grad.shape} does not match input shape {x.shape}")
    spec = _check_spec(spec, _precision_of(x))
    kernel = _kernels(spec.kind)[1]
    res = np.empty(x.shape, dtype=np.result_type(grad.dtype, x.dtype))
    _run_chunked(kernel, (grad.reshape(-1), x.reshape(-1), res.reshape(-1)), (spec.n, spec.eps), workers)
    return res


# ---------------------------------------------------------------------------
# instrumented op counting
#
# The scalar primitives are plain Python functions.  For the audit they are
# re-bound against a namespace whose ``math`` counts calls, and fed a traced
# float that counts arithmetic.  What is counted is therefore exactly the
# code the kernels compile.


@dataclass
class OpCount:
    mul: int = 0
    add: int = 0
    recip: int = 0
    cmp: int = 0
    guard: int = 0
    transcendental: int = 0

    @property
    def total(self) -> int:
        """Elementary arithmetic ops: mul + add + recip + cmp (guards and transcendentals excluded)."""
        return self.mul + self.add + self.recip + self.cmp


class _Traced:
    __slots__ = ("v", "ops")

    def __init__(self, v, ops):
        self.v = float(v)
        self.ops = ops

    def _bin(self, other, kind, fn):
        setattr(self.ops, kind, getattr(self.ops, kind) + 1)
        return _Traced(fn(self.v, _val(other)), self.ops)

    def __add__(self, o):
        return self._bin(o, "add", lambda a, b: a + b)

    def __radd__(self, o):
        return self._bin(o, "add", lambda a, b: b + a)

    def __sub__(self, o):
        return self._bin(o, "add", lambda a, b: a - b)

    def __rsub__(self, o):
        return self._bin(o, "add", lambda a, b: b - a)

    def __mul__(self, o):
        return self._bin(o, "mul", lambda a, b: a * b)

    def __rmul__(self, o):
        return self._bin(o, "mul", lambda a, b: b * a)

    def __truediv__(self, o):
        return self._bin(o, "recip", lambda a, b: a / b)

    def __rtruediv__(self, o):
        return self._bin(o, "recip", lambda a, b: b / a)

    def __neg__(self):
        return _Traced(-self.v, self.ops)

    def __abs__(self):
        return _Traced(abs(self.v), self.ops)

    def _cmp(self, o, fn):
        self.ops.cmp += 1
        return fn(self.v, _val(o))

    def __gt__(self, o):
        return self._cmp(o, lambda a, b: a > b)

    def __ge__(self, o):
        return self._cmp(o, lambda a, b: a >= b)

    def __lt__(self, o):
        return self._cmp(o, lambda a, b: a < b)

    def __le__(self, o):
        return self._cmp(o, lambda a, b: a <= b)

    def __eq__(self, o):
        return self._cmp(o, lambda a, b: a == b)

    def __ne__(self, o):
        return self._cmp(o, lambda a, b: a != b)

    __hash__ = None

    def __float__(self):
        return self.v


def _val(x):
    return x.v if isinstance(x, _Traced) else x


class _CountingMath:
    """Stand-in for ``math`` inside re-bound primitives."""

    def __init__(self, ops: OpCount):
        self._ops = ops

    def isfinite(self, x):
        self._ops.guard += 1
        return math.isfinite(_val(x))

    def _fn(self, name):
        f = getattr(math, name)

        def call(x):
            self._ops.transcendental += 1
            return _Traced(f(_val(x)), self._ops)

        return call

    def __getattr__(self, name):
        return self._fn(name)


def _instrument(fn, ops: OpCount, memo=None):
    """Copy ``fn`` with ``math`` and every helper it calls swapped for counting versions."""
    memo = {} if memo is None else memo
    if fn in memo:
        return memo[fn]
    glb = dict(fn.__globals__)
    glb["math"] = _CountingMath(ops)
    new = types.FunctionType(fn.__code__, glb, fn.__name__, fn.__defaults__, fn.__closure__)
    memo[fn] = new
    for name in fn.__code__.co_names:
        target = fn.__globals__.get(name)
        if isinstance(target, types.FunctionType) and target.__module__.startswith("gemact"):
            glb[name] = _instrument(target, ops, memo)
    return new


# Representative inputs on the non-trivial, non-overflow branch: the rational
# part of GEM/E-GEM lives at x > 0, SE-GEM's at x < 0.
def _audit_input(spec: ActivationSpec) -> float:
    return -1.25 if spec.kind == "segem" else 1.25


def pow_even(x: float, n: int) -> tuple[float, int]:
    """``x**(2n)`` by square-and-multiply on ``x*x`` together with the multiplies it used."""
    n = check_order(n)
    ops = OpCount()
    val = _instrument(core._pow_even, ops)(_Traced(x, ops), n)
    return val.v, ops.mul


def pow_even_bound(n: int) -> int:
    """Multiplies of the addition chain: 1 + floor(log2 n) + popcount(n) - 1."""
    n = check_order(n)
    return n.bit_length() + bin(n).count("1") - 1


@dataclass
class OpAudit:
    spec: ActivationSpec
    counts: OpCount
    claimed_total: int | None
    notes: list = field(default_factory=list)

    @property
    def matches_claim(self) -> bool | None:
        if self.claimed_total is None:
            return None
        return self.counts.total == self.claimed_total


def _claimed_forward_total(spec: ActivationSpec) -> int | None:
    # published figure for the GEM family: 5 + floor(log2 N)
    if spec.is_gem_family:
        return 5 + spec.n.bit_length() - 1
    return None


def audit_ops(spec, x: float | None = None) -> OpAudit:
    """Count the forward path's operations per element by running it instrumented."""
    spec = core._spec_of(spec)
    x = _audit_input(spec) if x is None else x
    ops = OpCount()
    fwd = _instrument(core.PRIMITIVES[spec.kind][0], ops)
    fwd(_Traced(x, ops), spec.n, spec.eps)
    audit = OpAudit(spec, ops, _claimed_forward_total(spec))
    if audit.matches_claim is False:
        audit.notes.append(
            f"measured {ops.total} ops, published count {audit.claimed_total}; "
            f"pow_even uses {pow_even_bound(spec.n)} multiplies for N={spec.n}"
        )
    if ops.guard:
        audit.notes.append(f"{ops.guard} overflow guard(s) per element not included in the total")
    return audit


def audit_backward(spec, x: float | None = None) -> OpCount:
    """Count one element of the gate-cached backward, including the grad_out multiply."""
    spec = core._spec_of(spec)
    cached = core.PRIMITIVES[spec.kind][2]
    if cached is None:
        raise ValueError(f"{spec} has no gate-cached backward")
    x = _audit_input(spec) if x is None else x
    gate = core.PRIMITIVES[spec.kind][0](float(x), spec.n, spec.eps)[1]
    ops = OpCount()
    # mirrors the kernel body: grad_out * cached(gate)
    _Traced(1.0, ops) * _instrument(cached, ops)(_Traced(gate, ops), spec.n, spec.eps)
    return ops


# ---------------------------------------------------------------------------
# benchmark


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


@dataclass
class BenchReport:
    spec: ActivationSpec
    elements: int
    iterations: int
    precision: str
    median_ns: float
    gelem_s: float
    gb_s: float
    opcount: OpCount
    passes: list = field(default_factory=list)
    erf_impl: str = ERF_IMPL

    def csv_row(self) -> str:
        c = self.opcount
        fields = [
            str(self.spec),
            self.elements,
            self.iterations,
            self.precision,
            self.median_ns,
            self.gelem_s,
            self.gb_s,
            c.mul,
            c.add,
            c.recip,
            c.cmp,
        ]
        # spec strings contain commas for egem/segem, so quote that field
        text = [f'"{fields[0]}"' if "," in fields[0] else fields[0]]
        return ",".join(text + [_fmt(f) for f in fields[1:]])


def bench(
    spec,
    elements: int,
    iterations: int = 5,
    precision: str = "double",
    *,
    seed: int = 0x5EED,
    warmups: int = 2,
) -> BenchReport:
    """Median wall time of ``apply_forward`` over a fixed standard-normal buffer.

    Buffers are allocated once outside the timed region.  At least five
    passes are timed even if fewer iterations are requested.
    """
    spec = core._spec_of(spec)
    if elements < 1:
        raise ValueError("elements must be >= 1")
    if iterations < 3:
        raise ValueError("iterations must be >= 3")
    if precision not in _DTYPES:
        raise ValueError(f"precision must be 'single' or 'double', got {precision!r}")
    x = np.random.default_rng(seed).standard_normal(elements).astype(_DTYPES[precision])
    out = np.empty_like(x)
    for _ in range(warmups):
        apply_forward(x, spec, out=out, check_finite=False)
    passes = []
    for _ in range(max(iterations, 5)):
        t0 = time.perf_counter_ns()
        apply_forward(x, spec, out=out, check_finite=False)
        passes.append(time.perf_counter_ns() - t0)
    median_ns = float(statistics.median(passes))
    secs = max(median_ns, 1.0) * 1e-9
    moved = 2 * elements * x.itemsize
    return BenchReport(
        spec=spec,
        elements=elements,
        iterations=iterations,
        precision=precision,
        median_ns=median_ns,
        gelem_s=elements / secs / 1e9,
        gb_s=moved / secs / 1e9,
        opcount=audit_ops(spec).counts,
        passes=passes,
    )
