import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cknlab.bessel import ckn_exp_pair, hardy_pair
from cknlab.domain import (CknParams, MonomialWeight, RadialField, RadialProfile, WeightSpec,
                           bump, extremizer, gauss_power, perturbed_extremizer)
from cknlab.errors import ZeroDenominator
from cknlab.identities import (alpha_profile, ckn_setup, default_suite, divergence_closed,
                               divergence_numeric, eval_terms, optimal_alpha, run_entry,
                               verify_2ckn_remainder, verify_bessel_chain, verify_monomial,
                               verify_nonradial, verify_pckn_remainder, verify_t1, verify_t2,
                               verify_t3, verify_t4_chain)
from cknlab.quad import QuadResult

ONE = WeightSpec.power(0.0)
GAUSS = gauss_power(0.0, 0.5, 2.0)          # exp(-r^2/2)
GAUSS_FIELD = RadialField.powersum([[-1.0, 1.0]])   # f'/f = -r


def by_id(reports):
    return {r.identity_id: r for r in reports}


# --- terms --------------------------------------------------------------------

@pytest.mark.parametrize("p", [2.0, 3.0])
def test_zero_field(p):
    t = eval_terms(ONE, RadialField.zero(), bump(1, 2), p, 3)
    assert t.T_pot == 0 and t.T_div == 0
    assert t.T_rem == pytest.approx(t.T_grad, rel=1e-12)
    rep = verify_t1(t, 1.0)
    assert rep.lhs == pytest.approx(t.T_grad, rel=1e-12) and rep.passed


def test_matched_field_kills_remainder():
    t = eval_terms(ONE, GAUSS_FIELD, GAUSS, 2, 3)
    assert abs(t.T_rem) <= 1e-10 * t.T_grad


def test_catalog_divergence_closed_form():
    N, a, b = 3, -1.0, 0.0
    A = WeightSpec.power(-2 * b)
    X = RadialField.powersum([[-1.0, b - a]])
    D = divergence_closed(A, X, 2, N)
    r = np.geomspace(0.1, 10, 20)
    assert np.allclose(D(r), -(N - 1 - a - b) * r ** -(a + b + 1), rtol=1e-14)
    assert np.allclose(divergence_numeric(A, X, 2, N)(r), D(r), rtol=1e-8)


def test_tabulated_divergence_uses_fd():
    A = WeightSpec.tabulated(np.geomspace(0.01, 100, 2000), np.geomspace(0.01, 100, 2000) ** -1.0)
    X = RadialField.powersum([[-1.0, 0.0]])
    assert divergence_closed(A, X, 2, 3) is None
    r = np.geomspace(0.1, 10, 10)
    assert np.allclose(divergence_numeric(A, X, 2, 3)(r), -r ** -2, rtol=1e-6)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("radial", [False, True])
def test_t1_gaussian(alpha, radial):
    t = eval_terms(ONE, GAUSS_FIELD, GAUSS, 2, 3, alpha=alpha)
    rep = verify_t1(t, alpha, radial)
    assert rep.passed and rep.residual_rel <= 1e-8


def test_t1_without_field_is_trivial():
    t = eval_terms(ONE, RadialField.zero(), GAUSS, 2, 3, alpha=2.0)
    rep = verify_t1(t, 2.0)
    assert rep.lhs == pytest.approx(4 * t.T_grad, rel=1e-12) and rep.passed


def _fake_terms(grad, pot, p):
    q = lambda v: QuadResult(v, 0.0, 0, True)
    return dataclasses.replace(eval_terms(ONE, GAUSS_FIELD, GAUSS, p, 3),
                               grad=q(grad), rad=q(grad), pot=q(pot))


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_optimal_alpha(p):
    assert optimal_alpha(_fake_terms(1.7, 1.7, p)) == pytest.approx(1.0)
    assert optimal_alpha(_fake_terms(1.0, 2 ** (p * p / (p - 1)), p)) == pytest.approx(2.0)
    with pytest.raises(ZeroDenominator):
        optimal_alpha(_fake_terms(0.0, 1.0, p))


def test_alpha_profile_minimised_at_optimum():
    t = eval_terms(ONE, GAUSS_FIELD, perturbed_extremizer(GAUSS, 0.2, 0.5, 2.0), 3, 3)
    a0 = optimal_alpha(t)
    vals = alpha_profile(t, [0.9 * a0, a0, 1.1 * a0])
    assert vals[1] <= min(vals[0], vals[2])


def test_t3_heisenberg():
    P = CknParams(3, 2, -1, 0)
    setup = ckn_setup(P, GAUSS)
    t = setup.terms(1.0)
    for radial in (False, True):
        rep = verify_t3(setup, t, radial)
        assert rep.residual_rel <= 1e-8 and rep.passed


@pytest.mark.parametrize("f", [bump(0.5, 2.0), gauss_power(3, 1, 2)], ids=["bump", "gp"])
def test_t2_and_chain(f):
    setup = ckn_setup(CknParams(5, 3, 0, 0), f)
    t = setup.terms(1.0)
    assert verify_t2(t).passed and verify_t2(t, radial=True).passed
    chain = verify_t4_chain(t)
    assert chain.passed
    assert chain.chain[0] >= chain.chain[1] >= chain.chain[2]


# --- CKN remainders -------------------------------------------------------------

def test_ickn_regime1_extremizer_is_sharp():
    P = CknParams(3, 2, -1, 0)
    reps = by_id(verify_2ckn_remainder(P, GAUSS))
    rep = reps["ICKN1"]
    scale = math.sqrt(ckn_setup(P, GAUSS).terms().T_grad * ckn_setup(P, GAUSS).terms().T_pot)
    assert abs(rep.lhs) <= 1e-10 * scale and abs(rep.rhs) <= 1e-10 * scale


def test_ickn_regime1_perturbed():
    P = CknParams(3, 2, -1, 0)
    f = perturbed_extremizer(GAUSS, 0.1, 0.5, 2.0)
    for rep in verify_2ckn_remainder(P, f, both_forms=True):
        assert rep.passed and rep.residual_rel <= 1e-8
        assert rep.lhs > 0 and rep.rhs > 0


def test_ickn_regime4_extremizer():
    P = CknParams(4, 2, 1.5, 1.5)
    f = extremizer(P)
    rep = by_id(verify_2ckn_remainder(P, f))["ICKN4"]
    t = ckn_setup(P, f).terms()
    assert abs(rep.lhs) <= 1e-8 * math.sqrt(t.T_grad * t.T_pot)
    assert rep.passed


@pytest.mark.parametrize("params,tag", [((3, 2, 2, 0.5), "ICKN2"), ((4, 2, 1.5, 0), "ICKN3")])
def test_ickn_other_regimes(params, tag):
    P = CknParams(*params)
    reps = by_id(verify_2ckn_remainder(P, bump(0.5, 2.0), both_forms=True))
    assert reps[tag].passed and reps[tag + "-a1"].passed


def test_pckn_p3_exponential():
    P = CknParams(5, 3, 0, 0)
    f = gauss_power(0.0, 1.0, 1.0)      # exp(-r), the extremizer shape
    reps = verify_pckn_remainder(P, f)
    assert len(reps) == 4
    for rep in reps:
        assert rep.passed and rep.residual_rel <= 1e-8
        t = ckn_setup(P, f).terms()
        assert abs(rep.rhs) <= 1e-8 * t.T_grad


def test_pckn_p3_perturbed_positive():
    P = CknParams(5, 3, 0, 0)
    f = perturbed_extremizer(gauss_power(0.0, 1.0, 1.0), 0.2, 0.5, 2.0)
    for rep in verify_pckn_remainder(P, f):
        assert rep.passed and rep.rhs > 0


def test_pckn_negative_sign_regime():
    P = CknParams(3, 3, 2, 0.5)
    reps = verify_pckn_remainder(P, bump(0.5, 2.0))
    assert {r.identity_id for r in reps} == {"PCKN1n", "PCKN2n", "PCKN3n", "PCKN4n"}
    assert all(r.passed for r in reps)


def test_pckn_reduces_to_ickn_at_p2():
    P = CknParams(3, 2, -1, 0)
    f = perturbed_extremizer(GAUSS, 0.1, 0.5, 2.0)
    ickn = by_id(verify_2ckn_remainder(P, f))["ICKN1"]
    pckn = by_id(verify_pckn_remainder(P, f))["PCKN3p"]
    assert pckn.lhs == pytest.approx(ickn.lhs, rel=1e-10)
    assert pckn.rhs == pytest.approx(ickn.rhs, rel=1e-10)


# --- Bessel chains ----------------------------------------------------------------

def test_hardy_chain_and_identities():
    reps = by_id(verify_bessel_chain(hardy_pair(4, 2), bump(1, 2)))
    assert reps["T5chain"].passed
    for rid in ("C5i1", "C5i2", "C5i3", "C5i4"):
        assert reps[rid].passed and reps[rid].residual_rel <= 1e-8


def test_conjugated_remainder_for_phi_times_bump():
    pair = hardy_pair(4, 2)
    b = bump(1.0, 2.0)
    phi = pair.phi
    f = RadialProfile(lambda r: phi(r) * b(r),
                      lambda r: phi.deriv(r) * b(r) + phi(r) * b.deriv(r),
                      lambda r: phi.deriv2(r) * b(r) + 2 * phi.deriv(r) * b.deriv(r) + phi(r) * b.deriv2(r),
                      b.support, "phi_bump", {})
    rep = by_id(verify_bessel_chain(pair, f))["C5i1"]
    assert rep.extra["conjugated_residual"] <= 1e-8 * rep.lhs
    assert rep.passed


def _log_cutoff(phi, L):
    """``phi`` times a smooth bump in ``log r`` supported on ``[e^-L, e^L]``."""
    def chi(r):
        t = np.log(r) / L
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(np.abs(t) < 1, np.exp(1 - 1 / (1 - t * t)), 0.0)

    def dchi(r):
        t = np.log(r) / L
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            d = np.where(np.abs(t) < 1, -2 * t / (1 - t * t) ** 2 * np.exp(1 - 1 / (1 - t * t)), 0.0)
        return d / (L * r)

    f = lambda r: phi(r) * chi(r)
    df = lambda r: phi.deriv(r) * chi(r) + phi(r) * dchi(r)
    return RadialProfile(f, df, None, (math.exp(-L), math.exp(L)), "log_cutoff", {"L": L})


def test_truncated_phi_remainder_shrinks():
    pair = hardy_pair(4, 2)
    rems = []
    for L in (1.0, 2.0, 4.0):
        t = verify_bessel_chain(pair, _log_cutoff(pair.phi, L))[0].terms
        rems.append(t.T_rem / t.T_grad)
    assert rems[0] > rems[1] > rems[2] > 0


def test_monomial_zero_weight_is_plain_chain():
    pair = hardy_pair(3, 2)
    mono = verify_monomial(pair, MonomialWeight((0, 0, 0)), bump(1, 2), 3)
    plain = verify_bessel_chain(pair, bump(1, 2), chain_id="T5.1mono",
                                params={"N": 3, "p": 2, "P": [0, 0, 0]})
    assert mono[0].chain == plain[0].chain
    assert [r.lhs for r in mono] == [r.lhs for r in plain]


@pytest.mark.parametrize("f", [bump(1, 2), bump(0.5, 3.0), gauss_power(0, 1, 2),
                               gauss_power(1, 0.5, 2), gauss_power(2, 1, 1)],
                         ids=["bump12", "bump053", "gauss", "rgauss", "r2exp"])
def test_monomial_plane_cross_check(f):
    rep = verify_monomial(hardy_pair(3, 2), MonomialWeight((1, 0)), f, 2)[0]
    assert rep.extra["cross_check_rel"] <= 1e-6
    assert rep.passed


def test_monomial_one_dimensional():
    reps = verify_monomial(hardy_pair(3, 2), MonomialWeight((2,)), bump(1, 2), 1)
    assert all(r.passed for r in reps)


def test_monomial_dimension_mismatch():
    with pytest.raises(ValueError):
        verify_monomial(hardy_pair(4, 2), MonomialWeight((1, 0)), bump(1, 2), 2)


def test_ckn_exp_pair_chain_p3():
    reps = verify_bessel_chain(ckn_exp_pair(5, 3, 0, 0), bump(0.5, 3))
    assert len(reps) == 1 and reps[0].passed


# --- non-radial -------------------------------------------------------------------

A_NR = WeightSpec.power(-1.0)
X_NR = RadialField.powersum([[-1.0, 0.0]])


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_nonradial_displays(p):
    reps = by_id(verify_nonradial(bump(1, 2), A_NR, X_NR, p, 1.0, 0.3, 2))
    assert reps["T1a"].residual_rel <= 1e-7 and reps["T1b"].residual_rel <= 1e-7
    chain = reps["T4chain"]
    assert chain.passed and chain.extra["strict"]
    assert chain.chain[0] > chain.chain[1]


def test_nonradial_collapses_at_zero_eps():
    reps = by_id(verify_nonradial(bump(1, 2), A_NR, X_NR, 2.0, 1.0, 0.0, 2))
    t = eval_terms(A_NR, X_NR, bump(1, 2), 2.0, 2)
    radial = verify_t1(t, 1.0)
    # the polar version carries the 2 pi angular measure
    assert reps["T1a"].lhs == pytest.approx(2 * math.pi * radial.lhs, rel=1e-9)
    assert reps["T4chain"].chain[0] == pytest.approx(reps["T4chain"].chain[1], rel=1e-12)


# --- suite ------------------------------------------------------------------------

def test_default_suite_covers_every_id():
    ids = set()
    for entry in default_suite():
        ids.update(r.identity_id for r in run_entry(entry))
    expected = {"T1a", "T1b", "T2a", "T2b", "T3a", "T3b", "T4chain", "T5chain", "T5.1mono",
                "C5i1", "C5i2", "C5i3", "C5i4", "ICKN1", "ICKN2", "ICKN3", "ICKN4"}
    expected |= {f"PCKN{k}{s}" for k in range(1, 5) for s in "pn"}
    assert expected <= ids


@settings(max_examples=12, deadline=None)
@given(alpha=st.floats(0.2, 5.0), p=st.sampled_from([2.0, 2.5, 3.0]),
       lo=st.floats(0.3, 1.5), width=st.floats(0.3, 2.0))
def test_t1_holds_for_any_alpha(alpha, p, lo, width):
    setup = ckn_setup(CknParams(4, p, 0.25, 0.25), bump(lo, lo + width))
    t = setup.terms(alpha)
    assert verify_t1(t, alpha).passed
    assert verify_t1(t, alpha, radial=True).passed
