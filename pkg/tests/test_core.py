import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gemact import core
from gemact.core import ActivationSpec, DivergenceError

orders = st.integers(min_value=1, max_value=9)
xs = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
positive = st.floats(min_value=1e-3, max_value=1e3)


def ulp_gap(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / math.ulp(max(abs(a), abs(b)))


# --- known values -----------------------------------------------------------


def test_gem_reference_values():
    assert core.gem_forward(2.0, 1) == pytest.approx(1.6, abs=1e-15)
    assert core.gem_forward(-3.0, 2) == 0.0
    assert core.gem_gate(3.0, 1) == pytest.approx(0.9, abs=1e-15)
    assert core.gem_grad(1.0, 2) == pytest.approx(1.5, abs=1e-15)
    assert core.gem_second(1.0, 1) == pytest.approx(0.5, abs=1e-15)


def test_second_from_gate_hand_value():
    # g = 0.8 at x = 2: 2 * (0.4) * 0.2 * (3 * 0.2 - 0.8) = -0.032
    assert core.gem_second_from_gate(2.0, 0.8, 1) == pytest.approx(-0.032, abs=1e-15)
    assert core.gem_second_from_gate(2.0, core.gem_gate(2.0, 1), 1) == pytest.approx(core.gem_second(2.0, 1), rel=1e-14)


def test_egem_overshoot_location():
    # egem'(x) for N=1 peaks at sqrt(3 eps) with value 9/8
    eps = 0.01
    assert core.egem_grad(0.1, 1, eps) == pytest.approx(1.0, rel=1e-15)
    assert core.egem_grad(math.sqrt(3 * eps), 1, eps) == pytest.approx(1.125, rel=1e-14)


def test_lipschitz_n1_exact():
    res = core.lipschitz(1)
    assert res.constant == 1.125
    assert res.argmax == pytest.approx(math.sqrt(3.0), rel=1e-15)


@pytest.mark.parametrize("n", range(1, 10))
def test_lipschitz_is_grad_at_argmax(n):
    res = core.lipschitz(n)
    assert core.gem_grad(res.argmax, n) == pytest.approx(res.constant, rel=1e-14)


def test_trough_values():
    t = core.segem_trough(1, 1.0)
    assert t.argmin == pytest.approx(-1.0, rel=1e-15)
    assert t.depth == pytest.approx(-0.5, rel=1e-15)
    t10 = core.segem_trough(1, 10.0)
    assert abs(t10.depth + 1.58) < 0.005
    assert core.segem_forward(t10.argmin, 1, 10.0) == pytest.approx(t10.depth, rel=1e-14)


def test_lp_distance_closed_reference():
    # p=2, N=1, eps=1: the integral of (x/(1+x^2))^2 over [0, inf) is pi/4
    assert core.lp_distance_closed(2, 1, 1.0) == pytest.approx(math.sqrt(math.pi / 4), rel=1e-14)


def test_lp_distance_divergence():
    with pytest.raises(DivergenceError):
        core.lp_distance_closed(1, 1, 1.0)
    assert core.lp_distance_closed(1, 2, 1.0) > 0


@pytest.mark.parametrize("p", [0, 0.5, True])
def test_lp_distance_rejects_bad_p(p):
    with pytest.raises(ValueError):
        core.lp_distance_closed(p, 1, 1.0)


def test_gem_second_rejects_nonpositive_gate_input():
    with pytest.raises(ValueError):
        core.gem_second_from_gate(0.0, 0.0, 1)


@pytest.mark.parametrize("bad", [0, 65, -1])
def test_order_range(bad):
    with pytest.raises(ValueError):
        core.gem_forward(1.0, bad)


def test_eps_must_be_positive():
    with pytest.raises(ValueError):
        core.egem_forward(1.0, 1, 0.0)
    with pytest.raises(ValueError):
        core.segem_forward(-1.0, 1, -2.0)


def test_huge_inputs_do_not_overflow():
    for n in (1, 9, 64):
        assert core.gem_forward(1e300, n) == 1e300
        assert core.gem_grad(1e300, n) == 1.0
        assert core.gem_gate(1e200, n) == 1.0
        assert core.segem_forward(-1e300, n, 1.0) == pytest.approx(0.0, abs=1e-300)
    assert core.gem_forward(1e-200, 3) == 0.0


def test_baselines():
    assert core.baseline(-1.0, "relu") == 0.0
    assert core.baseline(0.0, "silu") == 0.0
    assert core.baseline(1.0, "gelu") == pytest.approx(0.8413447460685429, rel=1e-15)
    assert core.baseline(1.0, "gelu_tanh") == pytest.approx(0.8411919906082768, rel=1e-12)
    for kind in ("silu", "gelu", "gelu_tanh"):
        h = 1e-6
        fd = (core.baseline(0.7 + h, kind) - core.baseline(0.7 - h, kind)) / (2 * h)
        assert core.baseline_grad(0.7, kind) == pytest.approx(fd, rel=1e-8)


# --- spec grammar -----------------------------------------------------------


@pytest.mark.parametrize(
    "text,expected",
    [
        ("relu", ActivationSpec("relu")),
        ("gem", ActivationSpec("gem", 1, 1.0)),
        ("gem:n=3", ActivationSpec("gem", 3, 1.0)),
        ("egem:n=2,eps=0.01", ActivationSpec("egem", 2, 0.01)),
        ("segem:eps=10", ActivationSpec("segem", 1, 10.0)),
    ],
)
def test_spec_parse(text, expected):
    assert ActivationSpec.parse(text) == expected


@pytest.mark.parametrize("text", ["", "tanh", "gem:n=0", "gem:n=x", "gem:eps=2", "egem:n=1,eps=-1", "gem:n=1,n=2", "relu:n=2"])
def test_spec_parse_rejects(text):
    with pytest.raises(ValueError):
        ActivationSpec.parse(text)


@given(
    st.sampled_from(["egem", "segem"]),
    st.integers(1, 64),
    st.floats(min_value=1e-300, max_value=1e300, allow_nan=False, allow_infinity=False),
)
def test_spec_round_trip(kind, n, eps):
    spec = ActivationSpec(kind, n, eps)
    assert ActivationSpec.parse(str(spec)) == spec


@given(st.sampled_from(core.BASELINES + ("gem",)), st.integers(1, 64))
def test_spec_round_trip_simple(kind, n):
    spec = ActivationSpec.gem(n) if kind == "gem" else ActivationSpec(kind)
    assert ActivationSpec.parse(str(spec)) == spec


# --- properties -------------------------------------------------------------


@given(xs, xs, orders)
def test_monotone(a, b, n):
    lo, hi = min(a, b), max(a, b)
    assert core.gem_forward(lo, n) <= core.gem_forward(hi, n)


@given(xs, orders)
def test_relu_upper_bound(x, n):
    y = core.gem_forward(x, n)
    assert 0.0 <= y <= max(0.0, x)


@given(st.floats(min_value=2.0, max_value=1e6), orders)
def test_asymptotic_remainder(x, n):
    # the subtraction itself is only good to ulp(x)
    assert abs(core.gem_forward(x, n) - x) <= x ** (1 - 2 * n) + 2 * math.ulp(x)


@pytest.mark.parametrize("n", [1, 2, 3, 9, 64])
def test_gate_half_at_one(n):
    assert core.gem_gate(1.0, n) == 0.5


@given(st.floats(min_value=0.0, max_value=50.0), st.floats(min_value=0.0, max_value=50.0), orders)
def test_gate_monotone_in_x(a, b, n):
    lo, hi = min(a, b), max(a, b)
    assert core.gem_gate(lo, n) <= core.gem_gate(hi, n)


@given(st.floats(min_value=1.0, max_value=50.0), st.integers(1, 8))
def test_gate_sharpens_above_one(x, n):
    assert core.gem_gate(x, n) <= core.gem_gate(x, n + 1)


@given(st.floats(min_value=1e-3, max_value=1.0), st.integers(1, 8))
def test_gate_sharpens_below_one(x, n):
    assert core.gem_gate(x, n) >= core.gem_gate(x, n + 1)


@given(st.floats(min_value=0.0, max_value=1e3))
def test_gate_is_uniform_cdf_at_n1(x):
    v = x * x / (1.0 + x * x)
    assert core.gem_gate(x, 1) == v


@given(positive, st.sampled_from([1, 2]))
def test_cached_grad_within_4ulp_low_order(x, n):
    assert ulp_gap(core.gem_grad_from_gate(core.gem_gate(x, n), n), core.gem_grad(x, n)) <= 4


@given(positive, st.sampled_from([1, 2]))
def test_cached_second_close(x, n):
    got = core.gem_second_from_gate(x, core.gem_gate(x, n), n)
    ref = core.gem_second(x, n)
    # both sides cross zero at the inflection point, so compare on the scale of the gradient
    assert abs(got - ref) <= 64 * math.ulp(1.0) * max(1.0, abs(ref), 2 * n * n / x)


@given(st.floats(min_value=-1e3, max_value=1e3), orders, st.floats(min_value=1e-6, max_value=10.0))
def test_unclipped_ratio_is_odd(x, n, eps):
    assert core.egem_unclipped(-x, n, eps) == -core.egem_unclipped(x, n, eps)


@given(st.floats(min_value=-50.0, max_value=50.0), orders, st.floats(min_value=1e-3, max_value=10.0))
def test_segem_stays_above_trough(x, n, eps):
    t = core.segem_trough(n, eps)
    assert core.segem_forward(x, n, eps) >= t.depth * (1 + 1e-12)


@given(st.floats(min_value=-50.0, max_value=50.0), orders, st.floats(min_value=1e-3, max_value=10.0))
def test_segem_ratio_and_grad(x, n, eps):
    ref = core.segem_grad(x, n, eps)
    got = core.segem_grad_from_ratio(core.segem_ratio(x, n, eps), n)
    assert abs(got - ref) <= 1e-13 * 2 * n


def test_lp_distance_decreases_as_eps_shrinks():
    for p in (2, 3):
        for n in (1, 2, 3):
            vals = [core.lp_distance_closed(p, n, e) for e in (1.0, 1e-2, 1e-4, 1e-6)]
            assert all(a > b for a, b in zip(vals, vals[1:]))


def test_generic_dispatch_matches_specific():
    spec = ActivationSpec.segem(2, 0.5)
    assert core.activation(-0.7, spec) == core.segem_forward(-0.7, 2, 0.5)
    assert core.derivative(-0.7, spec) == core.segem_grad(-0.7, 2, 0.5)
    assert core.activation(1.3, "egem:n=3,eps=0.1") == core.egem_forward(1.3, 3, 0.1)
    assert core.activation(0.3, "relu") == 0.3
    assert np.isclose(core.derivative(0.3, "gem:n=2"), core.gem_grad(0.3, 2))
