import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cknlab.domain import CknParams, RadialProfile, bump, gauss_power, perturbed_extremizer
from cknlab.errors import RegimeError
from cknlab.quad import integrate_radial
from cknlab.stability import (CSV_HEADER, ModelFamily, ckn_deficit, default_grid, deficit, distance,
                              inner_c_closed, inner_c_numeric, poincare_ratio, probe_check,
                              refined_grid, stability_ratio, stability_scan,
                              t6_weight_consistency, t8_weight_consistency)

T8 = CknParams(4, 2, -1, 0)
T8_P3 = CknParams(6, 3, 0.75, 0.5)
T6 = CknParams(4, 2, 1.5, 1.5)
CASES = [(T8, "plain_exp"), (T8_P3, "plain_exp"), (T6, "power_exp")]
IDS = ["T8", "T8p3", "T6"]


def perturbed(params, kind, eps=0.1, lam=1.0, lo=0.5, hi=2.0):
    return perturbed_extremizer(ModelFamily(kind, params).profile(lam), eps, lo, hi)


def test_model_family_shapes():
    m = ModelFamily("power_exp", T6)
    r = np.array([0.5, 1.0, 3.0])
    assert np.allclose(m(2.0, r), r ** T6.kappa * np.exp(-2.0 * r ** T6.gap / T6.gap))
    assert ModelFamily("plain_exp", T8).kappa == 0.0
    with pytest.raises(ValueError):
        ModelFamily("gaussian", T8)
    with pytest.raises(RegimeError):
        ModelFamily("plain_exp", CknParams(4, 2, 2, 0))


@pytest.mark.parametrize("params,kind", CASES, ids=IDS)
def test_deficit_vanishes_at_extremizer(params, kind):
    f = ModelFamily(kind, params).profile(1.3)
    d, err, prod, _ = deficit(params, f, kind, with_error=True)
    assert abs(d) <= 1e-9 * prod


@pytest.mark.parametrize("params,kind", CASES, ids=IDS)
def test_deficit_positive_off_extremizer(params, kind):
    assert deficit(params, perturbed(params, kind), kind) > 0


@pytest.mark.parametrize("t", [-2.0, 0.3, 5.0])
def test_deficit_homogeneity(t):
    f = perturbed(T8_P3, "plain_exp")
    assert deficit(T8_P3, f.scaled(t)) == pytest.approx(abs(t) ** 3 * deficit(T8_P3, f), rel=1e-10)


def test_deficit_requires_balance():
    P = CknParams(4, 2, 0, 0)
    with pytest.raises(RegimeError):
        deficit(P, bump(1, 2))
    assert math.isfinite(deficit(P, bump(1, 2), exploratory=True))


def test_unbalanced_exploratory_status():
    P = CknParams(4, 2, -0.5, 0)
    res = stability_ratio(P, perturbed(P, "plain_exp"), exploratory=True)
    assert res.status == "UNBALANCED"


def test_regime_deficit_matches_stability_deficit():
    f = perturbed(T8, "plain_exp")
    d, _ = ckn_deficit(T8, f)
    assert d == pytest.approx(deficit(T8, f), rel=1e-12)


@pytest.mark.parametrize("params,kind", CASES, ids=IDS)
def test_distance_of_exact_model(params, kind):
    fam = ModelFamily(kind, params)
    f = fam.profile(1.7, c=2.5)
    res = distance(params, f, fam)
    assert res.distance <= 1e-10 * res.scale
    assert res.c_star == pytest.approx(2.5, rel=1e-6)
    assert res.lambda_star == pytest.approx(1.7, rel=1e-6)


def test_inner_c_paths_agree_on_arrays():
    rng = np.random.default_rng(1)
    f, m, w = rng.standard_normal(300), rng.standard_normal(300), rng.uniform(0, 1, 300)
    assert inner_c_numeric(f, m, w, 2.0) == pytest.approx(inner_c_closed(f, m, w), rel=1e-12)


def test_inner_c_paths_agree_in_distance():
    f = perturbed(T8, "plain_exp", eps=0.2)
    a = distance(T8, f)
    b = distance(T8, f, generic_inner=True)
    assert b.c_star == pytest.approx(a.c_star, rel=1e-8)
    assert b.distance == pytest.approx(a.distance, rel=1e-8)


@pytest.mark.parametrize("params,kind", CASES, ids=IDS)
def test_distance_below_probe(params, kind):
    fam = ModelFamily(kind, params)
    f = perturbed(params, kind)
    res = distance(params, f, fam)
    p, sig = params.p, params.sigma
    probe = integrate_radial(lambda r: np.abs(f(r) - fam(1.0, r)) ** p, (0, math.inf),
                             params.N - 1 - sig).value
    assert 0 < res.distance <= probe * (1 + 1e-9)
    assert probe_check(params, f, fam, res)


def test_ratio_t8_finite_positive():
    res = stability_ratio(T8, perturbed(T8, "plain_exp", eps=0.05))
    assert 0 < res.ratio < math.inf and res.status == "ok"


def test_exact_model_sentinel():
    res = stability_ratio(T8, ModelFamily("plain_exp", T8).profile(1.0))
    assert res.ratio == math.inf and res.status == "sentinel"


@pytest.mark.parametrize("params,kind", CASES, ids=IDS)
def test_ratio_invariance(params, kind):
    fam = ModelFamily(kind, params)
    f = perturbed(params, kind)
    base = stability_ratio(params, f, fam).ratio
    assert stability_ratio(params, f.scaled(3.0), fam).ratio == pytest.approx(base, rel=1e-6)
    assert stability_ratio(params, f.dilated(1.7), fam).ratio == pytest.approx(base, rel=1e-6)


def test_scan_rejects_empty_grid():
    with pytest.raises(ValueError):
        stability_scan(T8, [])


def test_scan_excludes_sentinels():
    grid = [{"eps": 0.0, "bump_lo": 1.0, "bump_hi": 2.0, "lambda0": 1.0},
            {"eps": 0.1, "bump_lo": 1.0, "bump_hi": 2.0, "lambda0": 1.0}]
    res = stability_scan(T8, grid)
    assert res.rows[0]["status"] == "sentinel"
    assert res.min_ratio == res.rows[1]["ratio"]


def test_scan_csv_layout():
    res = stability_scan(T8, default_grid()[:2])
    lines = res.csv_text().split("\n")
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 4 and lines[-1] == ""


def test_refined_grid_contains_default():
    keys = lambda g: {tuple(sorted(s.items())) for s in g}
    assert len(default_grid()) == 27 and len(refined_grid()) == 125
    assert keys(default_grid()) <= keys(refined_grid())


def test_scan_parallel_matches_serial():
    grid = default_grid()[:4]
    a = stability_scan(T8, grid, workers=1)
    b = stability_scan(T8, grid, workers=2)
    assert a.csv_text() == b.csv_text()


# --- Poincare -------------------------------------------------------------------

def test_poincare_constant_is_sentinel():
    assert poincare_ratio(gauss_power(0.0, 0.0, 1.0), 4, 1, 1, 1, 1, 2) == math.inf


def test_poincare_bump():
    val = poincare_ratio(bump(1, 2), 4, 1, 1, 1, 1, 2)
    assert 0 < val < math.inf


def test_poincare_shift_invariance():
    b = bump(1.0, 2.0)
    shifted = RadialProfile(lambda r: b(r) + 3.0, b.deriv, b.deriv2, b.support, "shifted", {})
    base = poincare_ratio(b, 4, 1, 1, 1, 1, 2)
    assert poincare_ratio(shifted, 4, 1, 1, 1, 1, 2) == pytest.approx(base, rel=1e-12)


@pytest.mark.parametrize("args", [
    (4, 2.0, 1, 1, 1, 2),      # mu = N - p
    (4, 2.0, -0.5, 1, 1, 2),   # mu < 0
    (4, 1.0, 1, 0.4, 1, 2),    # alpha below (N-p-mu)/(N-p)
    (4, 1.0, 0, 1, 1, 2),      # delta = 0
    (4, 1.0, 1, 1, 0, 2),      # lambda = 0
])
def test_poincare_hypotheses(args):
    N, mu, delta, alpha, lam, p = args[0], args[1], args[2], args[3], args[4], args[5]
    with pytest.raises(RegimeError):
        poincare_ratio(bump(1, 2), N, mu, delta, alpha, lam, p)


@settings(max_examples=10, deadline=None)
@given(lam=st.floats(0.3, 3.0), c=st.floats(-5, 5))
def test_poincare_shift_property(lam, c):
    v = gauss_power(1.0, 1.0, 1.0)
    shifted = RadialProfile(lambda r: v(r) + c, v.deriv, v.deriv2, v.support, "shifted", {},
                            v.env_f, v.env_df)
    a = poincare_ratio(v, 5, 1.0, 1.0, 1.0, lam, 2.0)
    b = poincare_ratio(shifted, 5, 1.0, 1.0, 1.0, lam, 2.0)
    assert b == pytest.approx(a, rel=1e-8)


# --- exponent bookkeeping -------------------------------------------------------

def test_t6_weights_consistent():
    rep = t6_weight_consistency()
    assert rep["consistent"] and len(rep["samples"]) > 20


def test_t8_weights_consistent():
    rep = t8_weight_consistency()
    assert rep["consistent"] and len(rep["samples"]) > 20
