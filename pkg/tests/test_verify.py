import csv
import io
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gemact import core, verify
from gemact.core import DivergenceError
from gemact.verify import FiniteDiffConfig


# --- finite differences -----------------------------------------------------


@pytest.mark.parametrize("order", range(1, 9))
def test_polynomial_derivatives_are_exact(order):
    # a degree-(order+1) polynomial: the central stencil plus one Richardson level is exact
    coeffs = [0.5, -1.25, 2.0, 0.75, -0.3, 0.2, -0.1, 0.05, 0.01, 0.02]
    deg = order + 1

    def f(x):
        return sum(c * x**k for k, c in enumerate(coeffs[: deg + 1]))

    def exact(x):
        return sum(c * math.perm(k, order) * x ** (k - order) for k, c in enumerate(coeffs[: deg + 1]) if k >= order)

    cfg = FiniteDiffConfig(order=order, base_step=0.1, richardson_levels=1)
    est = verify.finite_diff_estimate(f, 0.3, cfg)
    # no truncation error is left, only rounding, which grows like eps * 2**k / h**k
    assert abs(est.value - exact(0.3)) <= est.error
    if order <= 3:
        assert est.value == pytest.approx(exact(0.3), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2.0, 2.0), st.integers(1, 3))
def test_sin_derivatives(x, order):
    cfg = FiniteDiffConfig(order=order, base_step=0.05, richardson_levels=3)
    est = verify.finite_diff_estimate(math.sin, x, cfg)
    exact = [math.cos, lambda t: -math.sin(t), lambda t: -math.cos(t)][order - 1](x)
    assert abs(est.value - exact) <= max(est.error, 1e-9)


@pytest.mark.parametrize("kw", [{"order": 0}, {"order": 9}, {"base_step": 1e-7}, {"base_step": 0.5}, {"richardson_levels": 5}])
def test_config_bounds(kw):
    with pytest.raises(ValueError):
        FiniteDiffConfig(**kw)


def test_nonfinite_samples_raise():
    with pytest.raises(verify.FiniteDiffError):
        verify.finite_diff(lambda x: math.inf if x > 0 else 0.0, 0.0)


def test_one_sided_polynomial():
    f = lambda x: 3 * x**3 - x  # noqa: E731
    right = verify.one_sided_diff(f, 0.0, 1, 0.01, 1)
    left = verify.one_sided_diff(f, 0.0, 1, 0.01, -1)
    assert right.value == pytest.approx(-1.0, abs=1e-10)
    assert left.value == pytest.approx(-1.0, abs=1e-10)
    with pytest.raises(ValueError):
        verify.one_sided_diff(f, 0.0, 1, 0.01, 0)


def test_oracle_does_not_call_closed_forms(monkeypatch):
    def boom(*a, **k):
        raise AssertionError("oracle used the closed form")

    monkeypatch.setattr(core, "lp_distance_closed", boom)
    monkeypatch.setattr(core, "gem_grad", boom)
    verify.lp_distance_quadrature(2, 1, 1.0)
    verify.finite_diff(lambda t: core.gem_forward(t, 1), 1.0)


# --- quadrature -------------------------------------------------------------


@pytest.mark.parametrize("p,n,eps", [(2, 1, 1.0), (3, 2, 1e-2), (2, 3, 1e-4), (1, 2, 1.0), (4, 1, 0.5)])
def test_quadrature_matches_closed_form(p, n, eps):
    q = verify.lp_distance_quadrature(p, n, eps, tol=1e-9)
    assert q.converged
    assert q.value == pytest.approx(core.lp_distance_closed(p, n, eps), rel=1e-6)
    assert q.tail_bound <= 1e-9 * q.integral


def test_quadrature_divergent_case():
    with pytest.raises(DivergenceError):
        verify.lp_distance_quadrature(1, 1, 1.0)
    with pytest.raises(ValueError):
        verify.lp_distance_quadrature(2, 1, 1.0, tol=0)


# --- golden section ---------------------------------------------------------


def test_golden_section_quadratic():
    x, v = verify.maximize_unimodal(lambda t: -(t - 0.3) ** 2 + 2, -1, 1)
    assert x == pytest.approx(0.3, abs=1e-7) and v == pytest.approx(2.0, abs=1e-14)
    x, v = verify.minimize_unimodal(lambda t: (math.log(t) - 1) ** 2, 1e-3, 1e3, log_scale=True)
    assert x == pytest.approx(math.e, rel=1e-7)


def test_golden_section_arguments():
    with pytest.raises(ValueError):
        verify.maximize_unimodal(lambda t: t, 1.0, 1.0)
    with pytest.raises(ValueError):
        verify.maximize_unimodal(lambda t: t, 0.0, 1.0, log_scale=True)


# --- scans ------------------------------------------------------------------


def test_vanishing_scan_on_power():
    scan = verify.vanishing_derivative_scan(lambda t: t**5, 3)
    assert scan.vanishes
    # fifth power: third derivative shrinks like h**2
    assert all(1.5 < o < 2.5 for o in scan.observed_orders)
    assert not verify.vanishing_derivative_scan(lambda t: t**3, 3).vanishes


def test_vanishing_scan_step_floor():
    with pytest.raises(ValueError):
        verify.vanishing_derivative_scan(math.sin, 4, steps=(0.1, 1e-3))


def test_junction_scan_detects_kink():
    smooth = verify.junction_scan(math.sin, 2)
    assert smooth.agree
    kink = verify.junction_scan(lambda t: t * t if t > 0 else 0.0, 2)
    assert not kink.agree and kink.jump == pytest.approx(-2.0, rel=1e-6)


# --- suites and report ------------------------------------------------------


@pytest.mark.parametrize("name", ["core", "distances", "smoothness"])
def test_suites_pass(name):
    failed = [r.row() for r in verify.run_suite(name) if not r.passed]
    assert not failed


def test_unknown_suite():
    with pytest.raises(ValueError):
        verify.run_suite("nope")


def test_report_format():
    text = verify.write_report(verify.example_checks())
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == verify.REPORT_HEADER
    assert all(len(r) == 7 and r[-1] in ("pass", "fail") for r in rows[1:])
    buf = io.StringIO()
    verify.write_report(verify.example_checks(), buf)
    assert buf.getvalue() == text
