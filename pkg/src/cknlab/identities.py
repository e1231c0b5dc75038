"""Verifiers for the Hardy/CKN identities with R_p remainders.

All integrals are radial reductions: the unit-sphere area is dropped from
every term, which leaves each identity unchanged.  For a radial field
``X = X_r e_r`` and radial ``u = f(r)``:

    T_grad = int A |f'|^p r^{n-1}
    T_pot  = int A |X_r|^p |f|^p r^{n-1}
    T_div  = int D |f|^p r^{n-1},   D = G' + (n-1) G / r,  G = A |X_r|^{p-2} X_r
    T_rem  = int A R_p(alpha^{-1/(p-1)} f X_r, alpha f') r^{n-1}
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .bessel import BesselPair, ckn_exp_pair, hardy_pair, pair_from_json
from .domain import (CknParams, MonomialWeight, PowerSum, RadialField, RadialProfile,
                     WeightSpec, bump, check_integrability, classify_regime, extremizer,
                     gauss_power, perturbed_extremizer, profile_from_json)
from .errors import IntegrabilityError, RegimeError, ZeroDenominator
from .quad import Envelope, QuadResult, integrate_radial, integrate_polar2d, integrate_sector
from .remainder import rp, rp_scalar

__all__ = [
    "TermSet", "IdentityReport", "RadialSetup", "eval_terms", "verify_t1", "verify_t2",
    "verify_t3", "verify_t4_chain", "optimal_alpha", "alpha_profile", "verify_2ckn_remainder",
    "verify_pckn_remainder", "verify_bessel_chain", "verify_monomial", "verify_nonradial",
    "sharp_constant", "ckn_setup", "divergence_closed", "divergence_numeric", "default_suite",
    "run_entry", "DEFAULT_TOL", "QUAD_REL_TOL",
]

DEFAULT_TOL = 1e-8
QUAD_REL_TOL = 1e-10
QUAD_ABS_TOL = 1e-300
# only a profile whose every term underflows is reported as not checkable
_SCALE_FLOOR = 1e-290


# ------------------------------------------------------------------ reports --

@dataclass(frozen=True)
class TermSet:
    grad: QuadResult
    rad: QuadResult
    pot: QuadResult
    div: QuadResult
    rem: QuadResult
    rem_rad: QuadResult
    alpha: float
    p: float
    n_eff: float

    @property
    def T_grad(self) -> float:
        return self.grad.value

    @property
    def T_rad(self) -> float:
        return self.rad.value

    @property
    def T_pot(self) -> float:
        return self.pot.value

    @property
    def T_div(self) -> float:
        return self.div.value

    @property
    def T_rem(self) -> float:
        return self.rem.value

    @property
    def T_rem_rad(self) -> float:
        return self.rem_rad.value

    @property
    def quad_error(self) -> float:
        return sum(q.abs_error_estimate for q in
                   (self.grad, self.pot, self.div, self.rem, self.rem_rad))

    def to_json(self) -> dict:
        return {"T_grad": self.T_grad, "T_rad": self.T_rad, "T_pot": self.T_pot,
                "T_div": self.T_div, "T_rem": self.T_rem, "T_rem_rad": self.T_rem_rad,
                "alpha": self.alpha}


@dataclass
class IdentityReport:
    identity_id: str
    lhs: float
    rhs: float
    residual_abs: float
    residual_rel: float
    quad_error: float
    status: str
    scale: float = 0.0
    terms: Optional[TermSet] = None
    params: Optional[dict] = None
    family: Optional[str] = None
    chain: Optional[list] = None
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_json(self) -> dict:
        d = {"identity_id": self.identity_id, "params": self.params, "family": self.family,
             "lhs": self.lhs, "rhs": self.rhs, "residual_abs": self.residual_abs,
             "residual_rel": self.residual_rel, "quad_error": self.quad_error,
             "status": self.status}
        if self.chain is not None:
            d["chain"] = list(self.chain)
        if self.extra:
            d["extra"] = dict(self.extra)
        return d


def _report(identity_id, lhs, rhs, quad_error, term_scale=0.0, tol=DEFAULT_TOL, **kw) -> IdentityReport:
    """Equality report.  Passes when ``|lhs - rhs| <= tol * scale`` with
    ``scale = max(|lhs|, |rhs|, term_scale)``; ``term_scale`` is the size of
    the largest term entering either side, which keeps sharp cases (both
    sides ~ 0) meaningful."""
    res = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs), term_scale)
    rel = res / max(scale, 1e-300)
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        status = "fail"
    elif scale < _SCALE_FLOOR:
        status = "skipped-integrability"
    else:
        status = "pass" if res <= tol * scale else "fail"
    return IdentityReport(identity_id, float(lhs), float(rhs), float(res), float(rel),
                          float(quad_error), status, float(scale), **kw)


def _chain_report(identity_id, members, quad_error, tol=DEFAULT_TOL, **kw) -> IdentityReport:
    """Ordering report for ``members[0] >= members[1] >= ...``."""
    scale = max(abs(m) for m in members)
    slack = tol * scale + quad_error
    violation = max([0.0] + [members[i + 1] - members[i] for i in range(len(members) - 1)])
    lhs, rhs = members[0], members[-1]
    res = abs(lhs - rhs)
    # for an ordering the meaningful relative figure is the violation
    rel = violation / max(scale, 1e-300)
    if not all(math.isfinite(m) for m in members):
        status = "fail"
    elif scale < _SCALE_FLOOR:
        status = "skipped-integrability"
    else:
        status = "pass" if violation <= slack else "fail"
    extra = kw.pop("extra", {})
    extra["violation"] = violation
    return IdentityReport(identity_id, float(lhs), float(rhs), float(res), float(rel),
                          float(quad_error), status, float(scale), chain=[float(m) for m in members],
                          extra=extra, **kw)


def skipped_report(identity_id, reason, **kw) -> IdentityReport:
    return IdentityReport(identity_id, math.nan, math.nan, math.nan, math.nan, math.nan,
                          "skipped-integrability", extra={"reason": reason}, **kw)


# -------------------------------------------------------------- divergence --

def divergence_closed(A: WeightSpec, X: RadialField, p: float, n_eff: float) -> Optional[PowerSum]:
    """``D = G' + (n-1) G / r`` as a power sum, when exponent arithmetic allows."""
    if not A.closed_form or X.form is None:
        return None
    if not X.form.terms:
        return PowerSum(())
    if p == 2:
        G = A.form * X.form
    elif len(X.form.terms) == 1:
        G = A.form * X.form.signed_power(p - 1)
    else:
        return None
    return G.derivative() + G.shift(-1.0).scale(n_eff - 1.0)


def divergence_numeric(A, X, p: float, n_eff: float) -> Callable:
    """``D`` by a fourth-order central difference with step ``1e-5 r``."""

    def G(r):
        x = X(r)
        return A(r) * np.abs(x) ** (p - 1.0) * np.sign(x)

    def D(r):
        r = np.asarray(r, dtype=float)
        h = 1e-5 * r
        dG = (-G(r + 2 * h) + 8 * G(r + h) - 8 * G(r - h) + G(r - 2 * h)) / (12 * h)
        return dG + (n_eff - 1.0) * G(r) / r

    return D


# -------------------------------------------------------------- setup -------

def _pick(envs, i):
    return None if any(e is None for e in envs) else envs[i]


def _env_mul(*pairs):
    """Elementwise product of (origin, infinity) envelope pairs."""
    out = []
    for i in (0, 1):
        es = [pr[i] if pr is not None else None for pr in pairs]
        if any(e is None for e in es):
            out.append(None)
            continue
        acc = es[0]
        for e in es[1:]:
            acc = acc * e
        out.append(acc)
    return tuple(out)


def _env_pow(pair, p):
    return None if pair is None else tuple(None if e is None else e ** p for e in pair)


def _power_env(k):
    return (Envelope(k), Envelope(k))


def _env_slower(x, y):
    out = []
    for i, origin in ((0, True), (1, False)):
        if x[i] is None or y[i] is None:
            out.append(None)
        else:
            out.append(x[i].slower(y[i], origin))
    return tuple(out)


@dataclass
class RadialSetup:
    """Weight ``A``, field ``X``, profile ``f``, exponent ``p`` and dimension."""

    A: WeightSpec
    X: RadialField
    f: RadialProfile
    p: float
    n_eff: float
    D: Optional[Callable] = None
    rel_tol: float = QUAD_REL_TOL

    def __post_init__(self):
        if self.D is None:
            closed = divergence_closed(self.A, self.X, self.p, self.n_eff)
            self._D_form = closed
            self.D = closed if closed is not None else divergence_numeric(self.A, self.X, self.p, self.n_eff)
        else:
            self._D_form = self.D if isinstance(self.D, PowerSum) else None
        self._A_env = self.A.envelope()
        self._X_env = self.X.form.envelope() if self.X.form is not None and self.X.form.terms else None
        self._D_env = self._D_form.envelope() if self._D_form is not None and self._D_form.terms else None
        p = self.p
        f_env = _env_pow(self.f.env_f, p)
        df_env = _env_pow(self.f.env_df, p)
        self.env_grad = _env_mul(self._A_env, df_env)
        self.env_pot = _env_mul(self._A_env, _env_pow(self._X_env, p), f_env)
        self.env_div = _env_mul(self._D_env, f_env)
        self.env_rem = _env_slower(self.env_grad, self.env_pot)

    def integrate(self, g, env=(None, None), abs_tol: float = QUAD_ABS_TOL) -> QuadResult:
        shift = self.n_eff - 1.0
        env = env or (None, None)
        lo_env = env[0].shift(shift) if env[0] is not None else None
        hi_env = env[1].shift(shift) if env[1] is not None else None
        return integrate_radial(g, self.f.support, shift, self.rel_tol, abs_tol, lo_env, hi_env)

    def rem_abs_tol(self, alpha: float, c: float) -> float:
        # R_p is a small difference of terms of this size in sharp cases
        p = self.p
        if not hasattr(self, "_sizes"):
            self._sizes = (self.grad().value, self.pot().value)
        g, q = self._sizes
        return self.rel_tol * (alpha ** p * g + (p - 1.0) * abs(c) ** p * q)

    def _with(self, fn):
        # non-finite values where f underflowed to 0 are 0 * inf artefacts
        def g(r):
            with np.errstate(over="ignore", invalid="ignore", under="ignore", divide="ignore"):
                v = fn(r)
            return np.where((self.f(r) == 0.0) & ~np.isfinite(v), 0.0, v)
        return g

    def grad(self) -> QuadResult:
        p = self.p
        return self.integrate(self._with(lambda r: self.A(r) * np.abs(self.f.deriv(r)) ** p), self.env_grad)

    def pot(self) -> QuadResult:
        p = self.p

        def g(r):
            f = self.f(r)
            return np.where(f == 0.0, 0.0, self.A(r) * np.abs(self.X(r) * f) ** p)
        return self.integrate(self._with(g), self.env_pot)

    def div(self) -> QuadResult:
        p = self.p

        def g(r):
            f = self.f(r)
            return np.where(f == 0.0, 0.0, self.D(r) * np.abs(f) ** p)
        return self.integrate(self._with(g), self.env_div)

    def weighted(self, B, env=(None, None)) -> QuadResult:
        """``int B |f|^p r^{n-1}`` for a weight callable ``B``."""
        p = self.p

        def g(r):
            f = self.f(r)
            return np.where(f == 0.0, 0.0, B(r) * np.abs(f) ** p)
        return self.integrate(self._with(g), _env_mul(env, _env_pow(self.f.env_f, p)))

    def rem(self, alpha: float, a_coef: Optional[float] = None) -> QuadResult:
        """``int A R_p(c f X_r, alpha f')`` with ``c = alpha^{-1/(p-1)}`` unless given."""
        p = self.p
        c = alpha ** (-1.0 / (p - 1.0)) if a_coef is None else a_coef

        def g(r):
            f = self.f(r)
            va = np.where(f == 0.0, 0.0, c * f * self.X(r))
            return self.A(r) * rp_scalar(va, alpha * self.f.deriv(r), p)
        return self.integrate(self._with(g), self.env_rem, self.rem_abs_tol(alpha, c))

    def rem_rad(self, alpha: float, a_coef: Optional[float] = None) -> QuadResult:
        """Radial-direction form ``R_p(c f |X_r|, alpha sign(X_r) f')``."""
        p = self.p
        c = alpha ** (-1.0 / (p - 1.0)) if a_coef is None else a_coef

        def g(r):
            f = self.f(r)
            x = self.X(r)
            va = np.where(f == 0.0, 0.0, c * f * np.abs(x))
            return self.A(r) * rp_scalar(va, alpha * np.sign(x) * self.f.deriv(r), p)
        return self.integrate(self._with(g), self.env_rem, self.rem_abs_tol(alpha, c))

    def terms(self, alpha: float = 1.0) -> TermSet:
        g = self.grad()
        return TermSet(g, g, self.pot(), self.div(), self.rem(alpha), self.rem_rad(alpha),
                       alpha, self.p, self.n_eff)

    def with_alpha(self, terms: TermSet, alpha: float, a_coef: Optional[float] = None) -> TermSet:
        return replace(terms, rem=self.rem(alpha, a_coef), rem_rad=self.rem_rad(alpha, a_coef),
                       alpha=alpha)


def eval_terms(A: WeightSpec, X: RadialField, f: RadialProfile, p: float, n_eff: float,
               alpha: float = 1.0, D=None, rel_tol: float = QUAD_REL_TOL) -> TermSet:
    return RadialSetup(A, X, f, p, n_eff, D, rel_tol).terms(alpha)


# ---------------------------------------------------- generic identities ----

def _t1_sides(terms: TermSet, alpha: float, radial: bool):
    p = terms.p
    grad = terms.T_rad if radial else terms.T_grad
    rem = terms.T_rem_rad if radial else terms.T_rem
    a = alpha ** p * grad
    b = (p - 1.0) * alpha ** (-p / (p - 1.0)) * terms.T_pot
    lhs = a + b
    rhs = -terms.T_div + rem
    return lhs, rhs, max(abs(a), abs(b), abs(terms.T_div), abs(rem))


def verify_t1(terms: TermSet, alpha: Optional[float] = None, radial: bool = False,
              tol: float = DEFAULT_TOL, **kw) -> IdentityReport:
    """``alpha^p T_grad + (p-1) alpha^{-p/(p-1)} T_pot = -T_div + T_rem(alpha)``."""
    alpha = terms.alpha if alpha is None else alpha
    if alpha != terms.alpha:
        raise ValueError("terms were computed at a different alpha")
    lhs, rhs, scale = _t1_sides(terms, alpha, radial)
    rep = _report("T1b" if radial else "T1a", lhs, rhs, terms.quad_error, scale, tol,
                  terms=terms, **kw)
    rep.extra["alpha"] = alpha
    return rep


def verify_t2(terms: TermSet, radial: bool = False, tol: float = DEFAULT_TOL, **kw) -> IdentityReport:
    """``T_grad - (-T_div - (p-1) T_pot) = T_rem(1)``."""
    if terms.alpha != 1.0:
        raise ValueError("verify_t2 needs terms at alpha = 1")
    p = terms.p
    grad = terms.T_rad if radial else terms.T_grad
    rem = terms.T_rem_rad if radial else terms.T_rem
    hardy = -terms.T_div - (p - 1.0) * terms.T_pot
    lhs = grad - hardy
    scale = max(abs(grad), abs(terms.T_div), (p - 1.0) * abs(terms.T_pot), abs(rem))
    return _report("T2b" if radial else "T2a", lhs, rem, terms.quad_error, scale, tol,
                   terms=terms, **kw)


def optimal_alpha(terms: TermSet, mode: str = "full_grad") -> float:
    """``(T_pot / T_grad)^{(p-1)/p^2}`` (``T_rad`` in radial_dir mode)."""
    grad = terms.T_rad if mode == "radial_dir" else terms.T_grad
    if not grad > 0:
        raise ZeroDenominator("gradient term vanishes; the profile is constant zero")
    p = terms.p
    return (terms.T_pot / grad) ** ((p - 1.0) / p ** 2)


def alpha_profile(terms: TermSet, alphas) -> list:
    """``alpha^p T_grad + (p-1) alpha^{-p/(p-1)} T_pot`` at each alpha.

    By the T1 identity this bounds ``p`` times the product term plus the
    divergence term from above; it is minimised at the optimal alpha."""
    p = terms.p
    return [a ** p * terms.T_grad + (p - 1.0) * a ** (-p / (p - 1.0)) * terms.T_pot for a in alphas]


def verify_t3(setup: RadialSetup, terms: TermSet, radial: bool = False,
              tol: float = DEFAULT_TOL, **kw) -> IdentityReport:
    """``T_grad^{1/p} T_pot^{(p-1)/p} + T_div/p = T_rem(alpha*)/p``.

    The first slot of ``R_p`` carries ``(T_grad/T_pot)^{1/p^2}`` and the
    second ``(T_pot/T_grad)^{(p-1)/p^2}``, exactly as the identity is
    usually displayed; the first equals ``alpha*^{-1/(p-1)}``.
    """
    p = terms.p
    grad = terms.T_rad if radial else terms.T_grad
    alpha = optimal_alpha(terms, "radial_dir" if radial else "full_grad")
    if terms.T_pot > 0:
        a_coef = (grad / terms.T_pot) ** (1.0 / p ** 2)
    else:
        a_coef = 0.0  # X u = 0 almost everywhere
    rem = (setup.rem_rad if radial else setup.rem)(alpha, a_coef)
    prod = grad ** (1.0 / p) * terms.T_pot ** ((p - 1.0) / p)
    lhs = prod + terms.T_div / p
    rhs = rem.value / p
    scale = max(abs(prod), abs(terms.T_div) / p, abs(rhs))
    err = terms.quad_error + rem.abs_error_estimate
    rep = _report("T3b" if radial else "T3a", lhs, rhs, err, scale, tol, terms=terms, **kw)
    rep.extra.update(alpha_star=alpha, product=prod)
    return rep


def verify_t4_chain(terms: TermSet, tol: float = DEFAULT_TOL, **kw) -> IdentityReport:
    """``T_grad >= T_rad >= -T_div - (p-1) T_pot`` and the product chain."""
    p = terms.p
    first = [terms.T_grad, terms.T_rad, -terms.T_div - (p - 1.0) * terms.T_pot]
    pw = terms.T_pot ** ((p - 1.0) / p)
    second = [terms.T_grad ** (1.0 / p) * pw, terms.T_rad ** (1.0 / p) * pw, -terms.T_div / p]
    r1 = _chain_report("T4chain", first, terms.quad_error, tol, terms=terms, **kw)
    r2 = _chain_report("T4chain", second, terms.quad_error, tol)
    if r2.status != "pass" and r1.status == "pass":
        r1.status = r2.status
    r1.extra["product_chain"] = r2.chain
    return r1


# ----------------------------------------------------------- CKN catalog ----

def sharp_constant(params: CknParams):
    return classify_regime(params)


def ckn_setup(params: CknParams, f: RadialProfile, sign: Optional[int] = None,
              rel_tol: float = QUAD_REL_TOL) -> RadialSetup:
    """``A = r^{-pb}``, ``X = sign * r^{b-a} e_r``; sign defaults to ``-sgn(g)``."""
    p, a, b = params.p, params.a, params.b
    if sign is None:
        sign = -1 if params.gap > 0 else 1
    A = WeightSpec.power(-p * b)
    X = RadialField.powersum([[float(sign), b - a]])
    return RadialSetup(A, X, f, p, params.N, rel_tol=rel_tol)


def _ckn_weights_needed(params: CknParams):
    p = params.p
    return ([-p * params.a, -params.sigma], [-p * params.b])


def _lambda(I_grad, I_pot, g):
    if not I_grad > 0:
        raise ZeroDenominator("gradient term vanishes")
    return (I_pot / I_grad) ** (1.0 / (2.0 * g))


_ICKN = {
    # (X sign in front of r^{g-1}, uses kappa' = N - 2b - 2 shift, constant numerator)
    "R1": (-1.0, False),
    "R2": (1.0, False),
    "R3": (1.0, True),
    "R4": (-1.0, True),
}


def _ickn_constant(params: CknParams, tag: str) -> float:
    N, a, b = params.N, params.a, params.b
    return {"R1": N - 1 - a - b, "R2": a + b + 1 - N,
            "R3": N - 3 * b + a - 3, "R4": 3 * b - a + 3 - N}[tag]


def verify_2ckn_remainder(params: CknParams, f: RadialProfile, regime: Optional[str] = None,
                          tol: float = DEFAULT_TOL, rel_tol: float = QUAD_REL_TOL,
                          both_forms: bool = False):
    """Product-form L2 CKN identity with explicit remainder for regimes R1-R4.

    With ``lambda = (I_pot / I_grad)^{1/(2g)}`` and ``g = b + 1 - a``:

        sqrt(I_grad I_pot) - C J = (lambda^g / 2) int r^{-2b} (f' + k f/r + s lambda^{-g} r^{g-1} f)^2

    where ``J = int f^2 r^{-(a+b+1)}``, ``k`` is 0 (R1, R2) or ``N - 2b - 2``
    (R3, R4) and ``s = -sign of the field``.  The left side is evaluated
    from independent quadratures of ``I_grad``, ``I_pot`` and ``J``.
    Returns a list of reports; with ``both_forms`` the lambda = 1 identity
    is included as well.
    """
    if params.p != 2:
        raise RegimeError("the L2 remainder identities need p = 2")
    reg = classify_regime(params)
    tag = regime or reg.tag
    if reg.tag == "DEGENERATE" or tag != reg.tag:
        raise RegimeError(f"parameters are in regime {reg.tag}, not {tag}")
    N, a, b = params.N, params.a, params.b
    g = params.gap
    xs, shifted = _ICKN[tag]
    k = (N - 2.0 * b - 2.0) if shifted else 0.0
    idx = tag[1]
    meta = {"params": params.to_json(), "family": f.family}
    wa, wd = _ckn_weights_needed(params)
    bad = check_integrability(params, f, wa, wd)
    if bad:
        rep = [skipped_report(f"ICKN{idx}", "; ".join(bad), **meta)]
        return rep + [skipped_report(f"ICKN{idx}-a1", "; ".join(bad), **meta)] if both_forms else rep
    A = WeightSpec.power(-2.0 * b)
    setup = RadialSetup(A, RadialField.zero(), f, 2.0, N, rel_tol=rel_tol)
    I_grad = setup.grad()
    I_pot = setup.weighted(WeightSpec.power(-2.0 * a), WeightSpec.power(-2.0 * a).envelope())
    J = setup.weighted(WeightSpec.power(-(a + b + 1.0)), WeightSpec.power(-(a + b + 1.0)).envelope())
    c = _ickn_constant(params, tag)
    C = reg.sharp_constant

    def remainder(lam_g):
        # lam_g = lambda^{-g}
        def h(r):
            fv = f(r)
            with np.errstate(over="ignore", invalid="ignore", under="ignore", divide="ignore"):
                inner = f.deriv(r) + np.where(fv == 0.0, 0.0, k * fv / r - xs * lam_g * r ** (g - 1.0) * fv)
                v = r ** (-2.0 * b) * inner ** 2
            return np.where(np.isfinite(v), v, 0.0)
        f2 = _env_mul(A.envelope(), _env_pow(f.env_f, 2.0))
        env = _env_slower(setup.env_grad, _env_mul(f2, _power_env(2.0 * g - 2.0)))
        if shifted:
            env = _env_slower(env, _env_mul(f2, _power_env(-2.0)))
        tol_abs = rel_tol * 4.0 * (I_grad.value + lam_g ** 2 * I_pot.value)
        return setup.integrate(h, env, tol_abs)

    lam = _lambda(I_grad.value, I_pot.value, g)
    rem = remainder(lam ** (-g))
    prod = math.sqrt(I_grad.value * I_pot.value)
    lhs = prod - C * J.value
    rhs = 0.5 * lam ** g * rem.value
    err = I_grad.abs_error_estimate + I_pot.abs_error_estimate + J.abs_error_estimate + rem.abs_error_estimate
    rep = _report(f"ICKN{idx}", lhs, rhs, err, max(prod, C * abs(J.value), abs(rhs)), tol, **meta)
    rep.extra.update(regime=tag, sharp_constant=C, lambda_=lam, constant_matches=abs(abs(c) / 2 - C) <= 1e-15 * max(1.0, C))
    if not both_forms:
        return [rep]
    rem1 = remainder(1.0)
    lhs1 = I_grad.value + I_pot.value - c * J.value
    err1 = err - rem.abs_error_estimate + rem1.abs_error_estimate
    rep1 = _report(f"ICKN{idx}-a1", lhs1, rem1.value, err1,
                   max(I_grad.value, I_pot.value, abs(c * J.value), abs(rem1.value)), tol, **meta)
    return [rep, rep1]


def verify_pckn_remainder(params: CknParams, f: RadialProfile, sign: Optional[str] = None,
                          tol: float = DEFAULT_TOL, rel_tol: float = QUAD_REL_TOL) -> list:
    """The four L^p CKN displays for one sign of the field.

    ``sign="p"``: ``X = -r^{b-a} e_r`` with constant ``N - 1 - (p-1)a - b``;
    ``sign="n"``: ``X = +r^{b-a} e_r`` with constant ``1 + (p-1)a + b - N``.
    Defaults to the sign matching ``g = b + 1 - a``.  Reports, in order:
    alpha = 1 full gradient, alpha = 1 radial direction, optimal alpha full
    gradient, optimal alpha radial direction.
    """
    p, N, a, b = params.p, params.N, params.a, params.b
    if sign is None:
        sign = "p" if params.gap > 0 else "n"
    xs = -1.0 if sign == "p" else 1.0
    c = (N - 1 - (p - 1) * a - b) if sign == "p" else (1 + (p - 1) * a + b - N)
    ids = [f"PCKN{i}{sign}" for i in (1, 2, 3, 4)]
    meta = {"params": params.to_json(), "family": f.family}
    wa, wd = _ckn_weights_needed(params)
    bad = check_integrability(params, f, wa, wd)
    if bad:
        return [skipped_report(i, "; ".join(bad), **meta) for i in ids]
    A = WeightSpec.power(-p * b)
    X = RadialField.powersum([[xs, b - a]])
    # J uses its own weight rather than the divergence of the field
    setup = RadialSetup(A, X, f, p, N, rel_tol=rel_tol)
    I_grad = setup.grad()
    Wa = WeightSpec.power(-p * a)
    I_pot = setup.weighted(Wa, Wa.envelope())
    Ws = WeightSpec.power(-params.sigma)
    J = setup.weighted(Ws, Ws.envelope())
    base = I_grad.abs_error_estimate + I_pot.abs_error_estimate + J.abs_error_estimate
    out = []
    for radial, rid in ((False, ids[0]), (True, ids[1])):
        rem = setup.rem_rad(1.0) if radial else setup.rem(1.0)
        lhs = I_grad.value + (p - 1.0) * I_pot.value - c * J.value
        scale = max(I_grad.value, (p - 1) * I_pot.value, abs(c * J.value), abs(rem.value))
        out.append(_report(rid, lhs, rem.value, base + rem.abs_error_estimate, scale, tol, **meta))
    if not I_grad.value > 0:
        raise ZeroDenominator("gradient term vanishes")
    a_coef = (I_grad.value / I_pot.value) ** (1.0 / p ** 2)
    b_coef = (I_pot.value / I_grad.value) ** ((p - 1.0) / p ** 2)
    prod = I_grad.value ** (1.0 / p) * I_pot.value ** ((p - 1.0) / p)
    for radial, rid in ((False, ids[2]), (True, ids[3])):
        rem = setup.rem_rad(b_coef, a_coef) if radial else setup.rem(b_coef, a_coef)
        lhs = prod - c / p * J.value
        rhs = rem.value / p
        scale = max(prod, abs(c / p * J.value), abs(rhs))
        rep = _report(rid, lhs, rhs, base + rem.abs_error_estimate, scale, tol, **meta)
        rep.extra["constant"] = c / p
        out.append(rep)
    return out


# ---------------------------------------------------------- Bessel chains ---

def bessel_setup(pair: BesselPair, f: RadialProfile, rel_tol: float = QUAD_REL_TOL) -> RadialSetup:
    X = RadialField.log_derivative(pair.phi)
    return RadialSetup(pair.V, X, f, pair.p, pair.dim, rel_tol=rel_tol)


def verify_bessel_chain(pair: BesselPair, f: RadialProfile, tol: float = DEFAULT_TOL,
                        rel_tol: float = QUAD_REL_TOL, chain_id: str = "T5chain", **meta) -> list:
    """Chain ``int V|u'|^p >= int V|u_r|^p >= int W|u|^p`` and its product
    version, plus the four exact L2 identities when ``p = 2``.

    ``int W |u|^p`` is integrated from ``W`` directly and compared with the
    field route ``-T_div - (p-1) T_pot`` as an extra consistency figure.
    """
    p = pair.p
    setup = bessel_setup(pair, f, rel_tol)
    terms = setup.terms(1.0)
    W_env = pair.W.envelope() if pair.W.closed_form else (None, None)
    Wint = setup.weighted(pair.W, W_env if pair.W.closed_form else None)
    pw = terms.T_pot ** ((p - 1.0) / p)
    members = [terms.T_grad, terms.T_rad, Wint.value]
    prod = [terms.T_grad ** (1.0 / p) * pw, terms.T_rad ** (1.0 / p) * pw,
            (Wint.value + (p - 1.0) * terms.T_pot) / p]
    err = terms.quad_error + Wint.abs_error_estimate
    rep = _chain_report(chain_id, members, err, tol, terms=terms, family=f.family, **meta)
    r2 = _chain_report(chain_id, prod, err, tol)
    if r2.status != "pass" and rep.status == "pass":
        rep.status = r2.status
    field_route = -terms.T_div - (p - 1.0) * terms.T_pot
    rep.extra.update(product_chain=r2.chain, W_integral=Wint.value, field_route=field_route,
                     W_sign_changes=_sign_changes(pair.W, f))
    out = [rep]
    if p == 2 and chain_id == "T5chain":
        out.extend(_c5_identities(pair, f, setup, terms, Wint, tol, **meta))
    return out


def _sign_changes(W, f) -> bool:
    lo, hi = f.support
    r = np.geomspace(max(lo, 1e-3), min(hi, 1e3), 200)
    w = W(r)
    return bool(np.any(w > 0) and np.any(w < 0))


def _c5_identities(pair, f, setup, terms, Wint, tol, **meta) -> list:
    V, phi = pair.V, pair.phi
    out = []
    fam = f.family

    def conj(r):
        # V phi^2 ((f/phi)')^2 = V (f' - psi f)^2, evaluated via the quotient
        ph = phi(r)
        q = f(r) / ph
        dq = f.deriv(r) / ph - f(r) * phi.deriv(r) / ph ** 2
        return V(r) * ph ** 2 * dq ** 2

    env = setup.env_rem
    c1 = setup.integrate(setup._with(conj), env, setup.rem_abs_tol(1.0, 1.0))
    err = terms.quad_error + Wint.abs_error_estimate + c1.abs_error_estimate
    # display 1: full gradient; both remainder forms
    for rid, grad, rem in (("C5i1", terms.T_grad, terms.T_rem), ("C5i2", terms.T_rad, terms.T_rem_rad)):
        scale = max(grad, abs(Wint.value), rem, c1.value)
        r_a = _report(rid, grad, Wint.value + rem, err, scale, tol, family=fam, **meta)
        r_b = _report(rid, grad, Wint.value + c1.value, err, scale, tol, family=fam, **meta)
        worst = r_a if r_a.residual_abs >= r_b.residual_abs else r_b
        worst.extra["conjugated_residual"] = r_b.residual_abs
        worst.extra["field_residual"] = r_a.residual_abs
        out.append(worst)
    # product forms: k = (||psi sqrt(V) u|| / ||sqrt(V) grad u||)^{1/2}
    for rid, grad, radial in (("C5i3", terms.T_grad, False), ("C5i4", terms.T_rad, True)):
        k = (terms.T_pot / grad) ** 0.25
        rem = (setup.rem_rad if radial else setup.rem)(k, 1.0 / k)
        lhs = math.sqrt(grad * terms.T_pot)
        rhs = 0.5 * (Wint.value + terms.T_pot) + 0.5 * rem.value
        scale = max(lhs, 0.5 * abs(Wint.value), 0.5 * terms.T_pot, 0.5 * rem.value)
        out.append(_report(rid, lhs, rhs, err + rem.abs_error_estimate, scale, tol, family=fam, **meta))
    return out


def verify_monomial(pair: BesselPair, P: MonomialWeight, f: RadialProfile, N: int,
                    tol: float = DEFAULT_TOL, rel_tol: float = QUAD_REL_TOL,
                    cross_check: bool = True) -> list:
    """Chain with monomial weight ``x^P``: the radial reduction runs in
    dimension ``N + |P|``; ``pair.dim`` must equal that.

    For ``N = 2, P = (1, 0)`` the gradient and potential terms are also
    computed by direct quadrature over the half plane ``x1 > 0`` with a
    Cartesian finite-difference gradient; the angular factor
    ``int_{-pi/2}^{pi/2} cos = 2`` links the two.
    """
    n_eff = P.n_eff(N)
    if abs(pair.dim - n_eff) > 1e-12:
        raise ValueError(f"pair dimension {pair.dim} does not match N + |P| = {n_eff}")
    meta = {"params": {"N": N, "p": pair.p, "P": list(P.P)}}
    reps = verify_bessel_chain(pair, f, tol, rel_tol, chain_id="T5.1mono", **meta)
    rep = reps[0]
    if cross_check and N == 2 and tuple(P.P) == (1, 0):
        rep.extra.update(_monomial_2d_check(pair, f))
        if rep.extra["cross_check_rel"] > 1e-6 and rep.status == "pass":
            rep.status = "fail"
    return reps


def _monomial_2d_check(pair: BesselPair, f: RadialProfile) -> dict:
    p = pair.p
    psi = RadialField.log_derivative(pair.phi)

    def u(x, y):
        return f(np.hypot(x, y))

    def h_grad(r, th):
        x, y = r * np.cos(th), r * np.sin(th)
        hx = 1e-5 * r
        ux = (-u(x + 2 * hx, y) + 8 * u(x + hx, y) - 8 * u(x - hx, y) + u(x - 2 * hx, y)) / (12 * hx)
        uy = (-u(x, y + 2 * hx) + 8 * u(x, y + hx) - 8 * u(x, y - hx) + u(x, y - 2 * hx)) / (12 * hx)
        return pair.V(r) * (ux * ux + uy * uy) ** (p / 2.0) * x

    def h_pot(r, th):
        x = r * np.cos(th)
        fv = f(r)
        return np.where(fv == 0.0, 0.0, pair.V(r) * np.abs(psi(r) * fv) ** p * x)

    sector = (-np.pi / 2, np.pi / 2)
    g2 = integrate_sector(h_grad, f.support, sector, rel_tol=1e-9)
    p2 = integrate_sector(h_pot, f.support, sector, rel_tol=1e-9)
    setup = bessel_setup(pair, f)
    g1, p1 = setup.grad(), setup.pot()
    angular = 2.0
    rel = max(abs(angular * g1.value - g2.value) / abs(g2.value),
              abs(angular * p1.value - p2.value) / max(abs(p2.value), 1e-300))
    return {"grad_2d": g2.value, "grad_1d": g1.value, "pot_2d": p2.value, "pot_1d": p1.value,
            "angular_factor": angular, "cross_check_rel": rel}


# ----------------------------------------------------------- non-radial -----

def verify_nonradial(f: RadialProfile, A: WeightSpec, X: RadialField, p: float, alpha: float = 1.0,
                     eps: float = 0.3, k: int = 2, tol: float = DEFAULT_TOL,
                     rel_tol: float = 1e-10) -> list:
    """Both T1 identities and the T4 chain for ``u = f(r) (1 + eps cos(k theta))`` in the plane."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    D = divergence_closed(A, X, p, 2.0) or divergence_numeric(A, X, p, 2.0)
    ca = alpha ** (-1.0 / (p - 1.0))

    def parts(r, th):
        ang = 1.0 + eps * np.cos(k * th)
        fv = f(r)
        u = fv * ang
        ur = f.deriv(r) * ang
        ut = -fv * eps * k * np.sin(k * th) / r
        return u, ur, ut, X(r), A(r)

    def grad(r, th):
        u, ur, ut, x, a = parts(r, th)
        return a * (ur * ur + ut * ut) ** (p / 2.0)

    def rad(r, th):
        u, ur, ut, x, a = parts(r, th)
        return a * np.abs(ur) ** p

    def pot(r, th):
        u, ur, ut, x, a = parts(r, th)
        return a * np.abs(x * u) ** p

    def div(r, th):
        u = parts(r, th)[0]
        return D(r) * np.abs(u) ** p

    def rem(r, th):
        u, ur, ut, x, a = parts(r, th)
        av = np.stack(np.broadcast_arrays(ca * u * x, 0.0 * u), axis=-1)
        bv = np.stack(np.broadcast_arrays(alpha * ur, alpha * ut), axis=-1)
        return a * rp(av, bv, p)

    def rem_rad(r, th):
        u, ur, ut, x, a = parts(r, th)
        return a * rp_scalar(ca * u * np.abs(x), alpha * np.sign(x) * ur, p)

    q = {name: integrate_polar2d(fn, f.support, rel_tol, QUAD_ABS_TOL)
         for name, fn in (("grad", grad), ("rad", rad), ("pot", pot), ("div", div),
                          ("rem", rem), ("rem_rad", rem_rad))}
    terms = TermSet(q["grad"], q["rad"], q["pot"], q["div"], q["rem"], q["rem_rad"], alpha, p, 2.0)
    meta = {"family": f"nonradial:{f.family}", "params": {"N": 2, "p": p, "eps": eps, "k": k}}
    out = [verify_t1(terms, alpha, False, tol, **meta), verify_t1(terms, alpha, True, tol, **meta)]
    chain = verify_t4_chain(terms, tol, **meta)
    chain.extra["strict"] = terms.T_grad > terms.T_rad + terms.quad_error
    out.append(chain)
    return out


# ------------------------------------------------------------ the suite -----

ALPHAS = (0.5, 1.0, 2.0)

CKN_SUITE = {
    "R1": [(3, 2, -1.0, 0.0), (4, 2, 0.0, 0.0), (5, 2, -0.5, 0.5)],
    "R2": [(3, 2, 2.5, 0.5), (4, 2, 3.5, 1.5), (5, 2, 4.0, 2.0)],
    "R3": [(4, 2, 1.5, 0.0), (5, 2, 2.0, 0.0), (6, 2, 2.5, 0.5)],
    "R4": [(4, 2, 1.5, 1.5), (3, 2, 0.5, 1.0), (5, 2, 2.0, 2.0)],
    "P+": [(5, 3, 0.0, 0.0), (6, 3, 0.75, 0.5), (4, 2.5, -0.5, 0.2)],
    "P-": [(3, 3, 2.0, 0.5), (4, 2.5, 3.0, 1.0), (5, 3, 3.5, 1.0)],
}

SUITE_FAMILIES = [{"family": "bump", "lo": 0.5, "hi": 2.0},
                  {"family": "gauss_power", "s": 3.0, "q": 1.0, "m": 2.0},
                  {"family": "extremizer", "beta": 1.0}]


def default_suite() -> list:
    """JSON-serialisable entries covering every identity ID."""
    entries = []
    for group, plist in CKN_SUITE.items():
        for N, p, a, b in plist:
            for fam in SUITE_FAMILIES:
                entries.append({"kind": "ckn", "params": {"N": N, "p": p, "a": a, "b": b},
                                "family": dict(fam)})
    entries.append({"kind": "ckn", "params": {"N": 3, "p": 2, "a": -1.0, "b": 0.0},
                    "family": {"family": "perturbed_extremizer", "eps": 0.1, "lo": 0.5, "hi": 2.0}})
    for pair in ({"pair": "hardy", "N": 4, "p": 2}, {"pair": "hardy", "N": 5, "p": 3},
                 {"pair": "ckn_exp", "N": 3, "p": 2, "a": -1.0, "b": 0.0},
                 {"pair": "ckn_exp", "N": 5, "p": 3, "a": 0.0, "b": 0.0}):
        for fam in ({"family": "bump", "lo": 1.0, "hi": 2.0}, {"family": "bump", "lo": 0.5, "hi": 3.0}):
            entries.append({"kind": "bessel", "pair": dict(pair), "family": fam})
    entries.append({"kind": "monomial", "N": 2, "P": [1, 0], "p": 2,
                    "family": {"family": "bump", "lo": 1.0, "hi": 2.0}})
    entries.append({"kind": "monomial", "N": 1, "P": [2], "p": 2,
                    "family": {"family": "bump", "lo": 1.0, "hi": 2.0}})
    for p in (2, 3):
        entries.append({"kind": "nonradial", "p": p, "eps": 0.3, "k": 2, "alpha": 1.0,
                        "family": {"family": "bump", "lo": 1.0, "hi": 2.0}})
    return entries


def _pair_from_entry(d: dict, n_override=None) -> BesselPair:
    kind = d.get("pair")
    if kind == "hardy":
        return hardy_pair(n_override or d["N"], d["p"])
    if kind == "ckn_exp":
        return ckn_exp_pair(n_override or d["N"], d["p"], d["a"], d["b"], d.get("t", -1.0))
    return pair_from_json(d)


def run_entry(entry: dict, tol: float = DEFAULT_TOL) -> list:
    """Run every identity that applies to one suite entry."""
    kind = entry["kind"]
    if kind == "ckn":
        return _run_ckn(entry, tol)
    if kind == "bessel":
        pair = _pair_from_entry(entry["pair"])
        f = profile_from_json(entry["family"])
        meta = {"params": {"N": pair.dim, "p": pair.p, "pair": pair.name}}
        return verify_bessel_chain(pair, f, tol, **meta)
    if kind == "monomial":
        P = MonomialWeight(tuple(entry["P"]))
        N = int(entry["N"])
        pair = hardy_pair(P.n_eff(N), entry["p"])
        f = profile_from_json(entry["family"])
        return verify_monomial(pair, P, f, N, tol)
    if kind == "nonradial":
        f = profile_from_json(entry["family"])
        A = WeightSpec.power(-1.0)
        X = RadialField.powersum([[-1.0, 0.0]])
        return verify_nonradial(f, A, X, float(entry["p"]), float(entry.get("alpha", 1.0)),
                                float(entry.get("eps", 0.3)), int(entry.get("k", 2)), tol)
    raise ValueError(f"unknown entry kind {kind!r}")


def _run_ckn(entry: dict, tol: float) -> list:
    params = CknParams.from_json(entry["params"])
    fam = dict(entry["family"])
    meta = {"params": params.to_json(), "family": fam["family"]}
    reg = classify_regime(params)
    if reg.tag == "DEGENERATE" and fam["family"] in ("extremizer", "perturbed_extremizer"):
        return [skipped_report("T1a", "no extremizer in a degenerate regime", **meta)]
    f = profile_from_json(fam, params)
    wa, wd = _ckn_weights_needed(params)
    bad = check_integrability(params, f, wa, wd)
    ids = ["T1a", "T1b", "T2a", "T2b", "T3a", "T3b", "T4chain"]
    if bad:
        return [skipped_report(i, "; ".join(bad), **meta) for i in ids]
    setup = ckn_setup(params, f)
    out = []
    base = None
    for alpha in ALPHAS:
        terms = setup.terms(alpha) if base is None else setup.with_alpha(base, alpha)
        if alpha == 1.0:
            base1 = terms
        base = base or terms
        out.append(verify_t1(terms, alpha, False, tol, **meta))
        out.append(verify_t1(terms, alpha, True, tol, **meta))
    out.append(verify_t2(base1, False, tol, **meta))
    out.append(verify_t2(base1, True, tol, **meta))
    out.append(verify_t3(setup, base1, False, tol, **meta))
    out.append(verify_t3(setup, base1, True, tol, **meta))
    out.append(verify_t4_chain(base1, tol, **meta))
    if params.p == 2 and reg.tag != "DEGENERATE":
        out.extend(verify_2ckn_remainder(params, f, tol=tol, both_forms=True))
    if reg.tag != "DEGENERATE":
        out.extend(verify_pckn_remainder(params, f, tol=tol))
    return out
