import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cknlab.errors import ConvergenceError
from cknlab.quad import (Envelope, MAX_NODES, integrate_polar2d, integrate_radial,
                         integrate_sector, radial_rule)


def test_constant_on_unit_interval():
    res = integrate_radial(lambda r: np.ones_like(r), (1.0, 2.0), 0.0)
    assert abs(res.value - 1.0) <= 1e-14


def test_gaussian_moment():
    # int_0^inf r^2 exp(-r^2) dr = sqrt(pi)/4
    res = integrate_radial(lambda r: np.exp(-r * r), (0.0, math.inf), 2.0)
    assert res.value == pytest.approx(math.sqrt(math.pi) / 4, rel=1e-12)


def test_gaussian_moment_node_doubling():
    coarse = integrate_radial(lambda r: np.exp(-r * r), (0.0, math.inf), 2.0, rel_tol=1e-6)
    fine = integrate_radial(lambda r: np.exp(-r * r), (0.0, math.inf), 2.0, rel_tol=1e-12)
    assert abs(coarse.value - fine.value) <= 1e-6 * fine.value
    assert fine.abs_error_estimate <= 1e-11


def test_inverse_sqrt_singularity():
    res = integrate_radial(lambda r: r ** -0.5, (0.0, 1.0), 0.0, lo_env=Envelope(-0.5))
    assert abs(res.value - 2.0) <= 1e-12


@pytest.mark.parametrize("k", [-0.9, -0.5, 0.0, 1.5, 4.0])
def test_power_on_unit_interval(k):
    res = integrate_radial(lambda r: np.ones_like(r), (0.0, 1.0), k, lo_env=Envelope(k))
    assert res.value == pytest.approx(1.0 / (k + 1.0), rel=1e-11)


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, 3.0])
def test_stretched_exponential_tail(m):
    # int_0^inf r^{m-1} exp(-r^m) dr = 1/m
    res = integrate_radial(lambda r: np.exp(-r ** m), (0.0, math.inf), m - 1.0,
                           hi_env=Envelope(m - 1.0, 1.0, m))
    assert res.value == pytest.approx(1.0 / m, rel=1e-11)


def test_algebraic_tail():
    # int_1^inf r^{-3} dr = 1/2
    res = integrate_radial(lambda r: np.ones_like(r), (1.0, math.inf), -3.0, hi_env=Envelope(-3.0))
    assert res.value == pytest.approx(0.5, rel=1e-11)


def test_radial_rule_matches_integral():
    res, rule = radial_rule(lambda r: np.exp(-r), (0.0, math.inf), 1.0)
    assert res.value == pytest.approx(1.0, rel=1e-12)
    assert float(np.dot(rule.w, np.exp(-rule.r))) == pytest.approx(1.0, rel=1e-10)


def test_polar_unit_disk_area():
    res = integrate_polar2d(lambda r, t: np.ones(np.broadcast(r, t).shape), (0.0, 1.0))
    assert abs(res.value - math.pi) <= 1e-12


def test_polar_separable():
    # int cos^2 t dt * int r exp(-r^2) dr = pi * 1/2, checked against 1D quadratures
    radial = integrate_radial(lambda r: np.exp(-r * r), (0.0, math.inf), 1.0).value
    angular = integrate_radial(lambda t: np.cos(t) ** 2, (0.0, 2 * math.pi), 0.0).value
    res = integrate_polar2d(lambda r, t: np.cos(t) ** 2 * np.exp(-r * r), (0.0, math.inf))
    assert res.value == pytest.approx(radial * angular, rel=1e-12)
    assert res.value == pytest.approx(math.pi / 2, rel=1e-12)


def test_polar_odd_integrand_vanishes():
    res = integrate_polar2d(lambda r, t: np.sin(t) * np.exp(-r * r), (0.0, math.inf))
    assert abs(res.value) <= 1e-12


def test_sector_quarter_disk():
    res = integrate_sector(lambda r, t: np.cos(t) * np.ones_like(r), (0.0, 1.0), (0.0, math.pi / 2))
    assert res.value == pytest.approx(0.5, rel=1e-13)


def test_node_budget_is_enforced():
    def nasty(r):
        return np.sin(1.0 / r) ** 2 / r
    with pytest.raises(ConvergenceError):
        integrate_radial(nasty, (1e-12, 1.0), 0.0, rel_tol=1e-15, abs_tol=0.0)
    assert MAX_NODES > 0


@settings(max_examples=30, deadline=None)
@given(lo=st.floats(0.1, 5.0), width=st.floats(0.01, 5.0))
def test_interval_additivity(lo, width):
    hi = lo + width
    mid = 0.5 * (lo + hi)
    g = lambda r: np.cos(r) ** 2 + r
    whole = integrate_radial(g, (lo, hi), 1.0).value
    parts = integrate_radial(g, (lo, mid), 1.0).value + integrate_radial(g, (mid, hi), 1.0).value
    assert whole == pytest.approx(parts, rel=1e-11, abs=1e-13)


@settings(max_examples=25, deadline=None)
@given(k=st.floats(-0.8, 3.0), c=st.floats(0.2, 3.0))
def test_gamma_function_moments(k, c):
    # int_0^inf r^k exp(-c r) dr = Gamma(k+1)/c^{k+1}
    res = integrate_radial(lambda r: np.exp(-c * r), (0.0, math.inf), k,
                           lo_env=Envelope(k), hi_env=Envelope(k, c, 1.0))
    assert res.value == pytest.approx(math.gamma(k + 1) / c ** (k + 1), rel=1e-10)
