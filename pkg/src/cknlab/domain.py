"""Parameter types, regime classification, weights, fields and test profiles.

Everything here is immutable and evaluates on numpy arrays.  Radial objects
are functions of ``r = |x|`` only; the angular measure is always dropped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import IntegrabilityError, RegimeError
from .quad import Envelope

__all__ = [
    "CknParams", "Regime", "classify_regime", "check_integrability", "require_integrable",
    "check_stability_params", "PowerSum", "WeightSpec", "RadialField", "RadialProfile",
    "MonomialWeight", "make_profile", "profile_from_json", "weight_from_json",
    "bump", "gauss_power", "extremizer", "perturbed_extremizer",
]

_BALANCE_TOL = 1e-12


@dataclass(frozen=True)
class CknParams:
    N: int
    p: float
    a: float
    b: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be an integer >= 1, got {self.N}")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        for name in ("a", "b"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def sigma(self) -> float:
        """Exponent of the right-hand weight, ``(p-1)a + b + 1``."""
        return (self.p - 1.0) * self.a + self.b + 1.0

    @property
    def gap(self) -> float:
        """``b + 1 - a``, the power in the extremizer exponential."""
        return self.b + 1.0 - self.a

    @property
    def kappa(self) -> float:
        """Power prefactor ``2b + 2 - N`` of the power-exponential extremizers."""
        return 2.0 * self.b + 2.0 - self.N

    def to_json(self) -> dict:
        return {"N": self.N, "p": self.p, "a": self.a, "b": self.b}

    @classmethod
    def from_json(cls, d: dict) -> "CknParams":
        return cls(int(d["N"]), float(d["p"]), float(d["a"]), float(d["b"]))


@dataclass(frozen=True)
class Regime:
    tag: str
    sharp_constant: float
    extremizer_kind: Optional[str]
    sharp: bool
    exact: Optional[Fraction] = None

    def to_json(self) -> dict:
        return {"regime": self.tag, "sharp_constant": self.sharp_constant,
                "exact": None if self.exact is None else str(self.exact),
                "extremizer_kind": self.extremizer_kind, "sharp": self.sharp}


def _exact_abs_ratio(num_terms: Sequence, den) -> Fraction:
    # binary floats are exact rationals, so float() of this is correctly rounded
    total = sum(Fraction(t) for t in num_terms)
    return abs(total) / Fraction(den)


def classify_regime(params: CknParams) -> Regime:
    """Regime tag, sharp constant and extremizer shape for ``(N, p, a, b)``.

    For ``p = 2`` the four regimes R1-R4 carry their own sharp constants.
    For other ``p`` the constant is ``|N - 1 - (p-1)a - b| / p``; only the
    plain exponential regimes (tagged R1/R2) are known to be sharp.  At
    ``g = 0`` the constant is still reported (it is the classical Hardy
    constant when ``a = b + 1``) but no extremizer exists.
    """
    N, p, a, b = params.N, params.p, params.a, params.b
    g = params.gap
    if p == 2:
        threshold = Fraction(N - 2, 2)
    else:
        threshold = (Fraction(N) - Fraction(p)) / Fraction(p)
    bq = Fraction(b)
    general = _exact_abs_ratio([N, -1, -(Fraction(p) - 1) * Fraction(a), -bq], p)
    if g == 0:
        return Regime("DEGENERATE", float(general), None, False, general)
    if g > 0:
        tag = "R1" if bq <= threshold else "R4"
    else:
        # at b == threshold the power prefactor vanishes; report the plain form
        tag = "R2" if bq >= threshold else "R3"
    if p == 2:
        if tag in ("R1", "R2"):
            const = _exact_abs_ratio([N, -a, -b, -1], 2)
            kind = "plain_exp"
        else:
            const = _exact_abs_ratio([N, -3 * bq, a, -3], 2)
            kind = "power_exp"
        sharp = True
    else:
        const = general
        kind = "plain_exp" if tag in ("R1", "R2") else None
        sharp = tag in ("R1", "R2")
    if const == 0:
        return Regime("DEGENERATE", 0.0, None, False, const)
    return Regime(tag, float(const), kind, sharp, const)


def check_stability_params(params: CknParams, theorem: str) -> None:
    """Raise :class:`RegimeError` unless the hypotheses of ``theorem`` hold.

    ``theorem`` is one of ``"T6"`` (power-exponential L2 stability),
    ``"T8"`` (L^p stability) or ``"P2_scan"`` (plain L2 stability).
    """
    N, p, a, b = params.N, params.p, params.a, params.b
    bad = []
    if theorem == "T8":
        if p < 2:
            bad.append("p >= 2")
        if N <= p:
            bad.append("N > p")
        else:
            if not 0 <= b < (N - p) / p:
                bad.append("0 <= b < (N-p)/p")
            if not a <= N * b / (N - p) + _BALANCE_TOL:
                bad.append("a <= Nb/(N-p)")
            if abs(params.sigma - p * b * N / (N - p)) > _BALANCE_TOL * max(1.0, abs(params.sigma)):
                bad.append("(p-1)a+b+1 = pbN/(N-p)")
    elif theorem == "P2_scan":
        if p != 2:
            bad.append("p = 2")
        if N <= 2:
            bad.append("N > 2")
        else:
            if not 0 <= b < (N - 2) / 2:
                bad.append("0 <= b < (N-2)/2")
            if not a < N * b / (N - 2):
                bad.append("a < Nb/(N-2)")
            if abs(a + b + 1 - 2 * b * N / (N - 2)) > _BALANCE_TOL * max(1.0, abs(a + b + 1)):
                bad.append("a+b+1 = 2bN/(N-2)")
    elif theorem == "T6":
        if p != 2:
            bad.append("p = 2")
        if not (N - 2) / 2 < b <= N - 2:
            bad.append("(N-2)/2 < b <= N-2")
        if abs(N * (b - a + 3) - 2 * (3 * b - a + 3)) > _BALANCE_TOL * max(1.0, abs(N * (b - a + 3))):
            bad.append("N(b-a+3) = 2(3b-a+3)")
    else:
        raise ValueError(f"unknown theorem {theorem!r}")
    if bad:
        raise RegimeError(f"{theorem} hypotheses violated: " + ", ".join(bad))


@dataclass(frozen=True)
class MonomialWeight:
    P: tuple

    def __post_init__(self):
        if any(x < 0 for x in self.P):
            raise ValueError("monomial exponents must be non-negative")

    @property
    def total(self) -> float:
        return float(sum(self.P))

    def n_eff(self, N: int) -> float:
        return N + self.total


# ---------------------------------------------------------------- weights ---

@dataclass(frozen=True)
class PowerSum:
    """``exp(s r^m) * sum_i c_i r^{e_i}``."""

    terms: tuple
    s: float = 0.0
    m: float = 1.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for c, e in self.terms:
            out = out + c * r ** e
        if self.s:
            out = out * np.exp(self.s * r ** self.m)
        return out

    def deriv(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for c, e in self.terms:
            if e != 0:
                out = out + c * e * r ** (e - 1)
        if self.s:
            out = (out + self.s * self.m * r ** (self.m - 1) * self._poly(r)) * np.exp(self.s * r ** self.m)
        return out

    def _poly(self, r):
        out = np.zeros_like(r)
        for c, e in self.terms:
            out = out + c * r ** e
        return out

    def scale(self, k: float) -> "PowerSum":
        return PowerSum(tuple((k * c, e) for c, e in self.terms), self.s, self.m)

    def shift(self, k: float) -> "PowerSum":
        """Multiply by ``r^k``."""
        return PowerSum(tuple((c, e + k) for c, e in self.terms), self.s, self.m)

    def derivative(self) -> "PowerSum":
        terms = {}
        for c, e in self.terms:
            if e != 0:
                terms[e - 1] = terms.get(e - 1, 0.0) + c * e
            if self.s:
                terms[e + self.m - 1] = terms.get(e + self.m - 1, 0.0) + c * self.s * self.m
        return PowerSum(_clean_terms(terms), self.s, self.m)

    def __add__(self, other: "PowerSum") -> "PowerSum":
        if not self.terms:
            return other
        if not other.terms:
            return self
        if (self.s, self.m if self.s else 0) != (other.s, other.m if other.s else 0):
            raise ValueError("cannot add power sums with different tilts")
        terms = {}
        for c, e in self.terms + other.terms:
            terms[e] = terms.get(e, 0.0) + c
        return PowerSum(_clean_terms(terms), self.s, self.m)

    def __mul__(self, other: "PowerSum") -> "PowerSum":
        if self.s and other.s and self.m != other.m:
            raise ValueError("cannot multiply tilts with different powers")
        terms = {}
        for c1, e1 in self.terms:
            for c2, e2 in other.terms:
                terms[e1 + e2] = terms.get(e1 + e2, 0.0) + c1 * c2
        m = self.m if self.s else other.m
        return PowerSum(_clean_terms(terms), self.s + other.s, m)

    def signed_power(self, q: float) -> "PowerSum":
        """``|X|^{q-1} X`` for a single-term sum (exact power-law calculus)."""
        if len(self.terms) != 1:
            raise ValueError("signed power needs a single term")
        (c, e), = self.terms
        return PowerSum(((abs(c) ** (q - 1) * c, e * q),), self.s * q, self.m)

    @property
    def min_exponent(self) -> float:
        return min(e for c, e in self.terms if c != 0) if self.terms else 0.0

    @property
    def max_exponent(self) -> float:
        return max(e for c, e in self.terms if c != 0) if self.terms else 0.0

    def envelope(self) -> tuple[Envelope, Envelope]:
        """(origin, infinity) decay envelopes."""
        return (Envelope(self.min_exponent, -self.s, self.m),
                Envelope(self.max_exponent, -self.s, self.m))


def _clean_terms(terms: dict) -> tuple:
    return tuple((c, e) for e, c in sorted(terms.items()) if c != 0.0)


@dataclass(frozen=True)
class WeightSpec:
    """Radial weight: power ``r^gamma``, tilted ``r^gamma exp(s r^m)``,
    a closed-form power sum, or a tabulated grid (cubic spline in log r).

    A tabulated weight may carry a closed-form ``base``; the spline then
    models ``w / base`` so that exponential growth or decay of the base does
    not pass through the global spline fit.
    """

    kind: str
    form: Optional[PowerSum] = None
    grid: Optional[tuple] = None
    _spline: object = field(default=None, compare=False, repr=False)
    base: Optional["WeightSpec"] = None

    @classmethod
    def power(cls, gamma: float, coef: float = 1.0) -> "WeightSpec":
        return cls("power", PowerSum(((coef, gamma),)))

    @classmethod
    def tilted(cls, gamma: float, s: float, m: float, coef: float = 1.0) -> "WeightSpec":
        return cls("tilted", PowerSum(((coef, gamma),), s, m))

    @classmethod
    def powersum(cls, terms, s: float = 0.0, m: float = 1.0) -> "WeightSpec":
        return cls("powersum", PowerSum(tuple((float(c), float(e)) for c, e in terms), s, m))

    @classmethod
    def tabulated(cls, r, w, base: Optional["WeightSpec"] = None) -> "WeightSpec":
        from scipy.interpolate import CubicSpline
        r = np.asarray(r, dtype=float)
        w = np.asarray(w, dtype=float)
        if base is not None and not base.closed_form:
            raise ValueError("a tabulated base must be closed-form")
        y = w if base is None else w / base(r)
        spline = CubicSpline(np.log(r), y)
        return cls("tabulated", None, (tuple(r.tolist()), tuple(w.tolist())), spline, base)

    @property
    def closed_form(self) -> bool:
        return self.form is not None

    def __call__(self, r):
        if self.form is not None:
            return self.form(r)
        r = np.asarray(r, dtype=float)
        y = self._spline(np.log(r))
        return y if self.base is None else self.base(r) * y

    def deriv(self, r):
        if self.form is not None:
            return self.form.deriv(r)
        r = np.asarray(r, dtype=float)
        dy = self._spline(np.log(r), 1) / r
        if self.base is None:
            return dy
        return self.base.deriv(r) * self._spline(np.log(r)) + self.base(r) * dy

    def scale(self, k: float) -> "WeightSpec":
        if self.form is not None:
            return WeightSpec(self.kind, self.form.scale(k))
        r, w = self.grid
        return WeightSpec.tabulated(r, k * np.asarray(w), self.base)

    def envelope(self) -> tuple[Envelope, Envelope]:
        if self.form is not None:
            return self.form.envelope()
        r, w = (np.asarray(x) for x in self.grid)
        # local power-law slopes at the ends of the table
        k0 = math.log(abs(w[1] / w[0])) / math.log(r[1] / r[0]) if w[0] and w[1] else 0.0
        k1 = math.log(abs(w[-1] / w[-2])) / math.log(r[-1] / r[-2]) if w[-1] and w[-2] else 0.0
        return Envelope(k0), Envelope(k1)

    def to_json(self) -> dict:
        if self.kind == "power":
            (c, e), = self.form.terms
            d = {"weight": "power", "gamma": e}
            if c != 1.0:
                d["coef"] = c
            return d
        if self.kind == "tilted":
            (c, e), = self.form.terms
            d = {"weight": "tilted", "gamma": e, "s": self.form.s, "m": self.form.m}
            if c != 1.0:
                d["coef"] = c
            return d
        if self.kind == "powersum":
            return {"weight": "powersum", "terms": [[c, e] for c, e in self.form.terms],
                    "s": self.form.s, "m": self.form.m}
        r, w = self.grid
        d = {"weight": "tabulated", "r": list(r), "w": list(w)}
        if self.base is not None:
            d["base"] = self.base.to_json()
        return d


def weight_from_json(d: dict) -> WeightSpec:
    kind = d.get("weight")
    if kind == "power":
        return WeightSpec.power(float(d["gamma"]), float(d.get("coef", 1.0)))
    if kind == "tilted":
        return WeightSpec.tilted(float(d["gamma"]), float(d["s"]), float(d["m"]),
                                 float(d.get("coef", 1.0)))
    if kind == "powersum":
        return WeightSpec.powersum(d["terms"], float(d.get("s", 0.0)), float(d.get("m", 1.0)))
    if kind == "tabulated":
        base = weight_from_json(d["base"]) if d.get("base") else None
        return WeightSpec.tabulated(d["r"], d["w"], base)
    raise ValueError(f"unknown weight kind {kind!r}")


@dataclass(frozen=True)
class RadialField:
    """Radial vector field ``X(x) = X_r(|x|) x/|x|``."""

    form: Optional[PowerSum] = None
    func: Optional[Callable] = None
    dfunc: Optional[Callable] = None

    @classmethod
    def powersum(cls, terms) -> "RadialField":
        return cls(PowerSum(tuple((float(c), float(e)) for c, e in terms)))

    @classmethod
    def zero(cls) -> "RadialField":
        return cls(PowerSum(()))

    @classmethod
    def log_derivative(cls, phi: "RadialProfile") -> "RadialField":
        """``phi'/phi``, in closed form for gauss_power profiles."""
        if phi.family == "gauss_power":
            s, q, m = (phi.params[k] for k in ("s", "q", "m"))
            terms = {}
            if s:
                terms[-1.0] = terms.get(-1.0, 0.0) + s
            if q:
                terms[m - 1.0] = terms.get(m - 1.0, 0.0) - q * m
            return cls(PowerSum(_clean_terms(terms)))

        def psi(r):
            return phi.deriv(r) / phi(r)

        def dpsi(r):
            f, d1, d2 = phi(r), phi.deriv(r), phi.deriv2(r)
            return d2 / f - (d1 / f) ** 2

        return cls(None, psi, dpsi)

    def __call__(self, r):
        if self.form is not None:
            return self.form(r)
        return self.func(r)

    def deriv(self, r):
        if self.form is not None:
            return self.form.deriv(r)
        return self.dfunc(r)


# --------------------------------------------------------------- profiles ---

@dataclass(frozen=True)
class RadialProfile:
    """A radial test function with analytic first and second derivatives.

    ``env_f``/``env_df`` are (origin, infinity) decay envelopes of ``|f|`` and
    ``|f'|``; ``None`` where the support is bounded away from that end.
    ``origin_power`` is the leading power ``s`` of ``f`` near 0.
    """

    f: Callable
    df: Callable
    d2f: Callable
    support: tuple
    family: str
    params: dict
    env_f: tuple = (None, None)
    env_df: tuple = (None, None)

    def __call__(self, r):
        return self.f(np.asarray(r, dtype=float))

    def deriv(self, r):
        return self.df(np.asarray(r, dtype=float))

    def deriv2(self, r):
        return self.d2f(np.asarray(r, dtype=float))

    @property
    def touches_origin(self) -> bool:
        return self.support[0] == 0.0

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.support[1])

    def self_check(self, n: int = 32, rel: float = 1e-6, seed: int = 0) -> bool:
        """Compare the analytic derivative with a central difference."""
        lo, hi = self.support
        lo_s = lo + 1e-3 if lo > 0 else 1e-2
        hi_s = hi - 1e-3 if math.isfinite(hi) else max(lo_s * 10, 5.0)
        rng = np.random.default_rng(seed)
        r = np.sort(rng.uniform(lo_s, hi_s, n))
        h = 1e-5 * np.minimum(r, np.minimum(r - lo, hi - r))
        fd = (self(r + h) - self(r - h)) / (2 * h)
        fd2 = (self.deriv(r + h) - self.deriv(r - h)) / (2 * h)
        d, d2 = self.deriv(r), self.deriv2(r)
        scale = np.maximum(np.abs(d), 1e-300) + 1e-12 * np.max(np.abs(d))
        scale2 = np.maximum(np.abs(d2), 1e-300) + 1e-12 * np.max(np.abs(d2))
        return bool(np.all(np.abs(fd - d) <= rel * scale) and np.all(np.abs(fd2 - d2) <= rel * 10 * scale2))

    def scaled(self, t: float) -> "RadialProfile":
        """``t * f``."""
        return RadialProfile(lambda r: t * self.f(r), lambda r: t * self.df(r),
                             lambda r: t * self.d2f(r), self.support, self.family,
                             {**self.params, "scale": t * self.params.get("scale", 1.0)},
                             self.env_f, self.env_df)

    def dilated(self, s: float) -> "RadialProfile":
        """``f(s r)``."""
        lo, hi = self.support
        env_f = tuple(None if e is None else _dilate_env(e, s) for e in self.env_f)
        env_df = tuple(None if e is None else _dilate_env(e, s) for e in self.env_df)
        return RadialProfile(lambda r: self.f(s * r), lambda r: s * self.df(s * r),
                             lambda r: s * s * self.d2f(s * r), (lo / s, hi / s), self.family,
                             {**self.params, "dilation": s * self.params.get("dilation", 1.0)},
                             env_f, env_df)

    def to_json(self) -> dict:
        return {"family": self.family, **{k: v for k, v in self.params.items()}}


def _dilate_env(e: Envelope, s: float) -> Envelope:
    return Envelope(e.k, e.c * s ** e.m, e.m)


def bump(lo: float, hi: float) -> RadialProfile:
    """``exp(-1/((r-lo)(hi-r)))`` on ``(lo, hi)``, zero outside."""
    if not (0 < lo < hi < math.inf):
        raise ValueError("bump needs 0 < lo < hi < inf")

    def parts(r):
        r = np.asarray(r, dtype=float)
        P = (r - lo) * (hi - r)
        inside = P > 0
        Ps = np.where(inside, P, 1.0)
        f = np.where(inside, np.exp(-1.0 / Ps), 0.0)
        dP = lo + hi - 2.0 * r
        return f, Ps, dP

    def f(r):
        return parts(r)[0]

    def df(r):
        fv, P, dP = parts(r)
        return fv * dP / P ** 2

    def d2f(r):
        fv, P, dP = parts(r)
        return fv * (dP ** 2 / P ** 4 - 2.0 / P ** 2 - 2.0 * dP ** 2 / P ** 3)

    return RadialProfile(f, df, d2f, (lo, hi), "bump", {"lo": lo, "hi": hi})


def gauss_power(s: float, q: float, m: float) -> RadialProfile:
    """``r^s exp(-q r^m)`` on ``(0, inf)``.

    With ``m > 0`` and ``q > 0`` it decays at infinity; with ``m < 0`` and
    ``q > 0`` it vanishes faster than any power at the origin.
    """
    if q < 0:
        raise ValueError("q must be non-negative")
    if m == 0:
        raise ValueError("m must be non-zero")

    def f(r):
        with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
            lr = np.log(r)
            return np.exp(s * lr - q * np.exp(m * lr))

    def psi(r):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            return s / r - q * m * r ** (m - 1.0)

    def dpsi(r):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            return -s / r ** 2 - q * m * (m - 1.0) * r ** (m - 2.0)

    def df(r):
        fv = f(r)
        with np.errstate(over="ignore", invalid="ignore"):
            out = fv * psi(r)
        return np.where(fv == 0.0, 0.0, out)

    def d2f(r):
        fv = f(r)
        with np.errstate(over="ignore", invalid="ignore"):
            ps = psi(r)
            out = fv * (ps * ps + dpsi(r))
        return np.where(fv == 0.0, 0.0, out)

    cm = q if m < 0 else 0.0
    ci = q if m > 0 else 0.0
    # leading powers of |f'| at each end
    if m > 0:
        d0 = s - 1.0 if s != 0 else m - 1.0
        dinf = s + m - 1.0 if q else s - 1.0
    else:
        d0 = s + m - 1.0 if q else s - 1.0
        dinf = s - 1.0 if s != 0 else s + m - 1.0
    env_f = (Envelope(s, cm, m), Envelope(s, ci, m))
    env_df = (Envelope(d0, cm, m), Envelope(dinf, ci, m))
    return RadialProfile(f, df, d2f, (0.0, math.inf), "gauss_power",
                         {"s": s, "q": q, "m": m}, env_f, env_df)


def extremizer(params: CknParams, beta: float = 1.0, kind: Optional[str] = None) -> RadialProfile:
    """The extremal profile of the regime of ``params`` with rate ``beta``.

    plain_exp: ``exp(-beta r^g/|g|)``-type (sign chosen so it decays toward
    the singular end); power_exp: ``r^{2b+2-N}`` times the same exponential.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    g = params.gap
    if g == 0:
        raise RegimeError("no extremizer when b + 1 - a = 0")
    if kind is None:
        kind = classify_regime(params).extremizer_kind or "plain_exp"
    s = params.kappa if kind == "power_exp" else 0.0
    prof = gauss_power(s, beta / abs(g), g)
    return RadialProfile(prof.f, prof.df, prof.d2f, prof.support, "gauss_power",
                         dict(prof.params), prof.env_f, prof.env_df)


def perturbed_extremizer(base: RadialProfile, eps: float, lo: float, hi: float) -> RadialProfile:
    """``base * (1 + eps * bump(lo, hi))``."""
    bp = bump(lo, hi)

    def f(r):
        return base.f(r) * (1.0 + eps * bp.f(r))

    def df(r):
        return base.df(r) * (1.0 + eps * bp.f(r)) + eps * base.f(r) * bp.df(r)

    def d2f(r):
        return (base.d2f(r) * (1.0 + eps * bp.f(r)) + 2.0 * eps * base.df(r) * bp.df(r)
                + eps * base.f(r) * bp.d2f(r))

    params = {"base": base.to_json(), "eps": eps, "lo": lo, "hi": hi}
    return RadialProfile(f, df, d2f, base.support, "perturbed_extremizer", params,
                         base.env_f, base.env_df)


def make_profile(family: str, **kw) -> RadialProfile:
    if family == "bump":
        return bump(float(kw["lo"]), float(kw["hi"]))
    if family == "gauss_power":
        return gauss_power(float(kw["s"]), float(kw["q"]), float(kw["m"]))
    if family == "extremizer":
        params = kw["params"]
        if isinstance(params, dict):
            params = CknParams.from_json(params)
        return extremizer(params, float(kw.get("beta", 1.0)), kw.get("kind"))
    if family == "perturbed_extremizer":
        base = kw["base"]
        if isinstance(base, dict):
            base = profile_from_json(base)
        return perturbed_extremizer(base, float(kw["eps"]), float(kw["lo"]), float(kw["hi"]))
    raise ValueError(f"unknown profile family {family!r}")


def profile_from_json(d: dict, params: Optional[CknParams] = None) -> RadialProfile:
    """Build a profile from a tagged JSON object.

    ``{"family": "extremizer", "beta": 1}`` takes its exponents from
    ``params``; ``{"family": "perturbed_extremizer", "eps": .., "lo": ..,
    "hi": .., "beta": ..}`` likewise perturbs that extremizer.
    """
    d = dict(d)
    fam = d.pop("family")
    if fam == "extremizer":
        if params is None and "params" not in d:
            raise ValueError("extremizer needs CKN parameters")
        return make_profile("extremizer", params=d.get("params", params), beta=d.get("beta", 1.0),
                            kind=d.get("kind"))
    if fam == "perturbed_extremizer" and "base" not in d:
        if params is None:
            raise ValueError("perturbed_extremizer needs CKN parameters")
        base = extremizer(params, float(d.get("beta", 1.0)), d.get("kind"))
        return perturbed_extremizer(base, float(d["eps"]), float(d["lo"]), float(d["hi"]))
    return make_profile(fam, **d)


# ---------------------------------------------------------- integrability ---

def check_integrability(params: CknParams, profile: RadialProfile, weight_exponents=(),
                        deriv_exponents=(), n_eff: Optional[float] = None) -> list:
    """Return the list of divergent integrals among
    ``int r^gamma |f|^p r^{n-1} dr`` (``weight_exponents``) and
    ``int r^gamma |f'|^p r^{n-1} dr`` (``deriv_exponents``)."""
    n = params.N if n_eff is None else n_eff
    p = params.p
    out = []
    for label, exps, env in (("|f|^p", weight_exponents, profile.env_f),
                             ("|f'|^p", deriv_exponents, profile.env_df)):
        for gamma in exps:
            if profile.touches_origin:
                e0 = env[0]
                if e0 is None or not (e0.c > 0 and e0.m < 0):
                    s0 = 0.0 if e0 is None else e0.k
                    if not gamma + (n - 1) + p * s0 > -1:
                        out.append(f"int r^{gamma:g} {label} r^(N-1) diverges at 0 "
                                   f"(exponent {gamma + n - 1 + p * s0:g} <= -1)")
            if profile.unbounded:
                e1 = env[1]
                if e1 is None or not (e1.c > 0 and e1.m > 0):
                    s1 = 0.0 if e1 is None else e1.k
                    if not gamma + (n - 1) + p * s1 < -1:
                        out.append(f"int r^{gamma:g} {label} r^(N-1) diverges at infinity "
                                   f"(exponent {gamma + n - 1 + p * s1:g} >= -1)")
    return out


def require_integrable(params: CknParams, profile: RadialProfile, weight_exponents=(),
                       deriv_exponents=(), n_eff: Optional[float] = None) -> None:
    bad = check_integrability(params, profile, weight_exponents, deriv_exponents, n_eff)
    if bad:
        raise IntegrabilityError(bad)
