import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gemact import core, kernels
from gemact.core import ActivationSpec

ALL_SPECS = [
    "relu",
    "silu",
    "gelu",
    "gelu_tanh",
    "gem:n=1",
    "gem:n=2",
    "gem:n=9",
    "egem:n=1,eps=0.01",
    "egem:n=3,eps=10",
    "segem:n=1,eps=1",
    "segem:n=2,eps=0.001",
]
FAMILY = [s for s in ALL_SPECS if s.split(":")[0] in core.GEM_FAMILY]


def scalar_map(x, spec):
    spec = ActivationSpec.parse(spec)
    f = core.PRIMITIVES[spec.kind][0]
    return np.array([f(np.float64(v), spec.n, spec.eps)[0] for v in x.reshape(-1)]).reshape(x.shape)


@pytest.fixture(scope="module")
def sample():
    rng = np.random.default_rng(7)
    return np.concatenate([rng.standard_normal(2000) * 3, [0.0, -0.0, 1.0, -1.0, 1e-300, 1e200, -1e200, 5e-324]])


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_forward_bit_identical_to_scalar(sample, spec):
    got = kernels.apply_forward(sample, spec).output
    np.testing.assert_array_equal(got, scalar_map(sample, spec))


@pytest.mark.parametrize("spec", ["gem:n=2", "egem:n=1,eps=0.01", "segem:n=3,eps=1", "gelu"])
def test_float32_matches_scalar_in_single(spec):
    x = np.random.default_rng(1).standard_normal(500).astype(np.float32)
    got = kernels.apply_forward(x, spec).output
    assert got.dtype == np.float32
    sp = ActivationSpec.parse(spec)
    f = core.PRIMITIVES[sp.kind][0]
    ref = np.array([f(np.float64(v), sp.n, sp.eps)[0] for v in x], dtype=np.float32)
    np.testing.assert_array_equal(got, ref)


def test_single_precision_eps_floor():
    x = np.ones(4, dtype=np.float32)
    with pytest.raises(ValueError):
        kernels.apply_forward(x, "egem:n=1,eps=1e-9")
    kernels.apply_forward(x.astype(np.float64), "egem:n=1,eps=1e-9")


@pytest.mark.parametrize("spec", FAMILY)
def test_chunked_matches_sequential(spec):
    x = np.random.default_rng(3).standard_normal(300_000)
    a = kernels.apply_forward(x, spec, want_cache=True)
    b = kernels.apply_forward(x, spec, want_cache=True, workers=4)
    np.testing.assert_array_equal(a.output, b.output)
    np.testing.assert_array_equal(a.cache.gates, b.cache.gates)
    g = np.random.default_rng(4).standard_normal(x.size)
    np.testing.assert_array_equal(kernels.apply_backward(g, a.cache), kernels.apply_backward(g, a.cache, workers=4))


def test_shapes_preserved():
    x = np.random.default_rng(0).standard_normal((3, 4, 5))
    res = kernels.apply_forward(x, "gem:n=2", want_cache=True)
    assert res.output.shape == x.shape and res.cache.gates.shape == x.shape
    assert kernels.apply_backward(np.ones_like(x), res.cache).shape == x.shape


def test_baseline_cache_is_omitted():
    res = kernels.apply_forward(np.ones(3), "relu", want_cache=True)
    assert res.cache is None and res.cache_omitted
    with pytest.raises(ValueError):
        kernels.apply_backward(np.ones(3), kernels.GateCache(np.ones(3), ActivationSpec("relu")))


def test_backward_rejects_mismatches():
    res = kernels.apply_forward(np.ones(3), "gem:n=1", want_cache=True)
    with pytest.raises(ValueError):
        kernels.apply_backward(np.ones(4), res.cache)
    with pytest.raises(ValueError):
        kernels.apply_backward(np.ones(3), res.cache, "gem:n=2")
    with pytest.raises(TypeError):
        kernels.apply_backward(np.ones(3), np.ones(3))


def test_nonfinite_input_rejected_unless_allowed():
    x = np.array([1.0, np.nan])
    with pytest.raises(ValueError):
        kernels.apply_forward(x, "gem:n=1")
    out = kernels.apply_forward(x, "gem:n=1", check_finite=False).output
    assert out[0] == core.gem_forward(1.0, 1) and math.isnan(out[1])


def test_out_buffer():
    x = np.linspace(-2, 2, 9)
    out = np.empty_like(x)
    res = kernels.apply_forward(x, "gem:n=1", out=out)
    assert res.output is out
    with pytest.raises(ValueError):
        kernels.apply_forward(x, "gem:n=1", out=np.empty(3))


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_direct_backward_matches_scalar_derivative(sample, spec):
    x = sample[np.abs(sample) < 1e100]
    g = np.linspace(-1, 1, x.size)
    got = kernels.apply_backward_direct(g, x, spec)
    ref = g * np.array([core.derivative(v, spec) for v in x])
    np.testing.assert_allclose(got, ref, rtol=1e-15, atol=0)


@settings(max_examples=60, deadline=None)
@given(
    hnp.arrays(np.float64, st.integers(1, 64), elements=st.floats(-1e3, 1e3)),
    st.sampled_from([1, 2]),
    st.sampled_from([1e-6, 1e-2, 1.0, 10.0]),
)
def test_cached_round_trip_low_order(x, n, eps):
    spec = ActivationSpec.egem(n, eps)
    cache = kernels.apply_forward(x, spec, want_cache=True).cache
    ones = np.ones_like(x)
    cached = kernels.apply_backward(ones, cache)
    direct = kernels.apply_backward_direct(ones, x, spec)
    gap = np.abs(cached - direct) / np.spacing(np.maximum(np.abs(cached), np.abs(direct)))
    assert np.all((cached == direct) | (gap <= 4))


@pytest.mark.parametrize("n", [1, 2, 3, 5, 9])
def test_segem_cached_close_on_gradient_scale(n):
    # near the stationary point both forms cancel; compare against the size of the terms
    x = np.random.default_rng(n).standard_normal(20_000) * 2
    spec = ActivationSpec.segem(n, 1.0)
    cache = kernels.apply_forward(x, spec, want_cache=True).cache
    ones = np.ones_like(x)
    diff = np.abs(kernels.apply_backward(ones, cache) - kernels.apply_backward_direct(ones, x, spec))
    assert diff.max() <= 8 * n * np.finfo(float).eps


def test_pow_even():
    assert kernels.pow_even(2.0, 1) == (4.0, 1)
    assert kernels.pow_even(2.0, 2) == (16.0, 2)
    assert kernels.pow_even(3.0, 3) == (729.0, 3)
    for n in range(1, 65):
        value, muls = kernels.pow_even(1.01, n)
        assert value == pytest.approx(1.01 ** (2 * n), rel=1e-13)
        assert muls == kernels.pow_even_bound(n)
        assert muls <= 1 + 2 * int(math.log2(n))
        if n & (n - 1) == 0:
            assert muls == 1 + int(math.log2(n))


@pytest.mark.parametrize("n", range(1, 10))
def test_audit_matches_pow_chain(n):
    audit = kernels.audit_ops(ActivationSpec.gem(n))
    # square, pow chain, add, divide, multiply by x, compare
    assert audit.counts.mul == kernels.pow_even_bound(n) + 1
    assert audit.counts.add == 1 and audit.counts.recip == 1 and audit.counts.cmp == 1


def test_audit_headline_counts():
    assert kernels.audit_ops("gem:n=1").counts.total == 5
    assert kernels.audit_ops("gem:n=2").counts.total == 6
    a3 = kernels.audit_ops("gem:n=3")
    assert a3.matches_claim is False and a3.notes


def test_audit_backward_budget():
    for n in (1, 2, 3, 9):
        ops = kernels.audit_backward(ActivationSpec.gem(n))
        assert ops.mul <= 4 and ops.add <= 2 and ops.recip == 0


def test_audit_backward_baseline_rejected():
    with pytest.raises(ValueError):
        kernels.audit_backward("relu")


def test_bench_report_shape():
    rep = kernels.bench("egem:n=2,eps=0.5", 1000, 3)
    row = rep.csv_row()
    assert row.startswith('"egem:n=2,eps=0.5",1000,3,double,')
    assert len(kernels.BENCH_HEADER.split(",")) == 11
    assert len(rep.passes) == 5 and rep.median_ns > 0
    with pytest.raises(ValueError):
        kernels.bench("relu", 10, 2)


def _mp_grad(x, spec):
    mpmath = pytest.importorskip("mpmath")
    with mpmath.workprec(200):
        x = mpmath.mpf(float(x))
        n, e = spec.n, mpmath.mpf(spec.eps)
        p = x ** (2 * n)
        d = e + p
        if spec.kind == "segem":
            return 1.0 if x >= 0 else float((e / d) * ((e - (2 * n - 1) * p) / d))
        return float((p / d) * ((p + (2 * n + 1) * e) / d)) if x > 0 else 0.0


@pytest.mark.parametrize("spec", ["gem:n=1", "gem:n=9", "egem:n=5,eps=0.01", "segem:n=1,eps=1", "segem:n=5,eps=10"])
def test_both_gradient_forms_accurate_in_absolute_terms(spec):
    # neither form can be ulp-accurate near a zero of the gradient; both stay within O(N) ulp of 1
    spec = ActivationSpec.parse(spec)
    x = np.random.default_rng(5).standard_normal(1500) * 1.5
    ones = np.ones_like(x)
    cached = kernels.apply_backward(ones, kernels.apply_forward(x, spec, want_cache=True).cache)
    direct = kernels.apply_backward_direct(ones, x, spec)
    truth = np.array([_mp_grad(v, spec) for v in x])
    bound = (2 * spec.n + 2) * np.finfo(float).eps
    assert np.abs(cached - truth).max() <= bound
    assert np.abs(direct - truth).max() <= bound
