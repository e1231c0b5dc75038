"""p-Bessel pairs: deriving W from (V, phi) and shooting phi from (V, W).

A pair ``(r^{n-1} V, r^{n-1} W)`` is a p-Bessel pair on ``(0, R)`` when

    (r^{n-1} V |phi'|^{p-2} phi')' + r^{n-1} W |phi|^{p-2} phi = 0

has a positive solution ``phi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .domain import (PowerSum, RadialField, RadialProfile, WeightSpec, gauss_power,
                     profile_from_json, weight_from_json)
from .errors import ConvergenceError, PositivityError

__all__ = ["BesselPair", "derive_W", "solve_pbessel", "ShootResult", "hardy_pair",
           "ckn_exp_pair", "pair_catalog", "pair_from_json", "default_grid"]


def default_grid(lo: float = 1e-3, hi: float = 1e3, n: int = 4000) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def _signed_pow(x, q):
    return np.abs(x) ** q * np.sign(x)


def _closed_W(V: PowerSum, psi: PowerSum, p: float, n: float) -> Optional[PowerSum]:
    # W = -[(V' + (n-1)V/r) Psi + V Psi' + (p-1) V |psi|^p],  Psi = |psi|^{p-2} psi
    if not psi.terms:
        return PowerSum(())
    if p == 2:
        Psi, psi_p = psi, psi * psi
    elif len(psi.terms) == 1:
        Psi = psi.signed_power(p - 1)
        (c, e), = psi.terms
        psi_p = PowerSum(((abs(c) ** p, e * p),))
    else:
        return None
    out = (V.derivative() * Psi + (V * Psi).shift(-1.0).scale(n - 1.0)
           + V * Psi.derivative() + (V * psi_p).scale(p - 1.0))
    return out.scale(-1.0)


def derive_W(V: WeightSpec, phi: RadialProfile, p: float, n_eff: float, grid=None) -> WeightSpec:
    """The weight ``W`` making ``(V, W)`` a p-Bessel pair with solution ``phi``.

    Returns a closed power-sum form when ``V`` is closed-form, ``phi`` is a
    ``gauss_power`` profile and ``|phi'/phi|^{p-2} phi'/phi`` is itself a
    power sum; otherwise a table on ``grid`` (cubic spline in ``log r``).
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    lo, hi = phi.support
    grid = grid[(grid > lo) & (grid < hi)]
    vals = phi(grid)
    if np.any(vals < 0) or np.any(np.isnan(vals)):
        bad = grid[~(vals >= 0)][0]
        raise PositivityError(f"phi is not positive at r = {bad:g}")
    # exact zeros are floating-point underflow in the tails; drop them from the table
    keep = vals > 0
    if not np.any(keep):
        raise PositivityError("phi vanishes on the whole grid")
    grid, vals = grid[keep], vals[keep]
    if V.closed_form and phi.family == "gauss_power":
        psi = RadialField.log_derivative(phi).form
        W = _closed_W(V.form, psi, p, n_eff)
        if W is not None:
            return WeightSpec("powersum", W)
    r = grid
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        Vr, dV = V(r), V.deriv(r)
        psi = phi.deriv(r) / vals
        dpsi = phi.deriv2(r) / vals - psi ** 2
        dPsi = np.where(psi != 0, (p - 1.0) * np.abs(psi) ** (p - 2.0) * dpsi,
                        dpsi if p == 2 else 0.0)
        W = -((dV + (n_eff - 1.0) * Vr / r) * _signed_pow(psi, p - 1.0) + Vr * dPsi
              + (p - 1.0) * Vr * np.abs(psi) ** p)
    # overflow of a growing V in the far tail; the table covers the finite part
    ok = np.isfinite(W)
    if ok.sum() < 4:
        raise PositivityError("W is not finite on the grid")
    base = V if V.closed_form else None
    if base is not None:
        ok &= np.isfinite(Vr) & (Vr != 0)
    return WeightSpec.tabulated(r[ok], W[ok], base)


@dataclass(frozen=True)
class BesselPair:
    V: WeightSpec
    W: WeightSpec
    phi: RadialProfile
    p: float
    dim: float
    interval: tuple = (0.0, math.inf)
    name: str = ""

    def flux(self, r):
        r = np.asarray(r, dtype=float)
        return r ** (self.dim - 1.0) * self.V(r) * _signed_pow(self.phi.deriv(r), self.p - 1.0)

    def residual(self, grid=None, h: float = 1e-3) -> float:
        """Largest ODE residual on ``grid`` relative to the two term sizes.

        The flux derivative uses a five-point stencil in ``log r``.
        """
        if grid is None:
            hi = min(self.interval[1], self.phi.support[1], 1e2)
            lo = max(self.interval[0], self.phi.support[0], 1e-2)
            grid = np.geomspace(lo, hi, 202)[1:-1]
        r = np.asarray(grid, dtype=float)
        # shrink the step where q varies fast in log r
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = np.abs(r * self.phi.deriv2(r) / self.phi.deriv(r)) + np.abs(r * self.V.deriv(r) / self.V(r))
        h = h / np.maximum(1.0, np.nan_to_num(rate, nan=1.0, posinf=1.0))
        q = [self.flux(r * np.exp(k * h)) for k in (-2.0, -1.0, 1.0, 2.0)]
        dq = (q[0] - 8.0 * q[1] + 8.0 * q[2] - q[3]) / (12.0 * h) / r
        phi = self.phi(r)
        src = r ** (self.dim - 1.0) * self.W(r) * _signed_pow(phi, self.p - 1.0)
        # |q|/r is the natural size of q'; it stays away from 0 where W changes sign
        scale = np.abs(src) + np.abs(self.flux(r)) / r
        ok = (scale > 0) & (np.abs(phi) > 1e-250)
        if not np.any(ok):
            return 0.0
        return float(np.max(np.abs(dq + src)[ok] / scale[ok]))

    def is_valid(self, tol: float = 1e-6) -> bool:
        r = np.geomspace(max(self.phi.support[0], 1e-2), min(self.phi.support[1], 1e2), 200)
        vals = self.phi(r)
        # exact zeros are tail underflow; a sign change shows up as a negative value
        return bool(np.all(vals >= 0) and vals[0] > 0) and self.residual() <= tol

    def to_json(self) -> dict:
        return {"name": self.name, "V": self.V.to_json(), "phi": self.phi.to_json(),
                "W": self.W.to_json(), "p": self.p, "N_eff": self.dim,
                "interval": [self.interval[0], _json_float(self.interval[1])]}


def _json_float(x):
    return x if math.isfinite(x) else "inf"


def pair_from_json(d: dict) -> BesselPair:
    V = weight_from_json(d["V"])
    phi = profile_from_json(d["phi"])
    p, n = float(d["p"]), float(d["N_eff"])
    W = weight_from_json(d["W"]) if "W" in d else derive_W(V, phi, p, n)
    lo, hi = d.get("interval", [0.0, "inf"])
    return BesselPair(V, W, phi, p, n, (float(lo), float(hi)), d.get("name", ""))


def hardy_pair(N: float, p: float) -> BesselPair:
    """``V = 1``, ``W = ((N-p)/p)^p r^{-p}``, ``phi = r^{-(N-p)/p}``."""
    k = (N - p) / p
    phi = gauss_power(-k, 0.0, 1.0)
    W = WeightSpec.power(-p, abs(k) ** p)
    return BesselPair(WeightSpec.power(0.0), W, phi, p, N, name="hardy")


def ckn_exp_pair(N: float, p: float, a: float, b: float, t: float = -1.0) -> BesselPair:
    """``V = r^{-pb}`` with ``phi = exp(t r^g / g)``, ``g = b + 1 - a``."""
    g = b + 1.0 - a
    if g == 0 or t * g >= 0:
        raise ValueError("need g != 0 and t of opposite sign to g")
    phi = gauss_power(0.0, -t / g, g)
    V = WeightSpec.power(-p * b)
    return BesselPair(V, derive_W(V, phi, p, N), phi, p, N, name="ckn_exp")


def pair_catalog() -> list:
    """Named pairs used by the default verification suite."""
    return [hardy_pair(4, 2), hardy_pair(5, 3), hardy_pair(3, 2.5),
            ckn_exp_pair(3, 2, -1.0, 0.0), ckn_exp_pair(5, 3, 0.0, 0.0),
            ckn_exp_pair(4, 2.5, 3.0, 1.0, t=1.0)]


# ---------------------------------------------------------------- shooting --

@dataclass(frozen=True)
class ShootResult:
    profile: RadialProfile
    positive: bool
    certified_interval: tuple
    zero: Optional[float]
    steps: int


def _coeffs(s, Vf, Wf, n):
    r = np.exp(s)
    return r, r ** (n - 1.0) * Vf(r), r ** n * Wf(r)


def _rhs(y, r, rnV, rnW, p):
    phi, q = y
    dphi = math.copysign((abs(q) / rnV) ** (1.0 / (p - 1.0)), q) if q else 0.0
    return np.array([r * dphi, -rnW * math.copysign(abs(phi) ** (p - 1.0), phi)]), dphi


def _rk4_step(y, h, c0, cm, c1, p):
    k1, d = _rhs(y, *c0, p)
    k2, _ = _rhs(y + h / 2 * k1, *cm, p)
    k3, _ = _rhs(y + h / 2 * k2, *cm, p)
    k4, _ = _rhs(y + h * k3, *c1, p)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), d


def _integrate(s0, s1, y0, steps, Vf, Wf, p, n):
    h = (s1 - s0) / steps
    half = s0 + 0.5 * h * np.arange(2 * steps + 1)
    R, RV, RW = (np.asarray(x, dtype=float).tolist() for x in _coeffs(half, Vf, Wf, n))
    S = half[::2]
    Y = np.empty((steps + 1, 2))
    D = np.empty(steps + 1)
    Y[0] = y0
    for i in range(steps):
        j = 2 * i
        c0 = (R[j], RV[j], RW[j])
        Y[i + 1], D[i] = _rk4_step(Y[i], h, c0, (R[j + 1], RV[j + 1], RW[j + 1]),
                                   (R[j + 2], RV[j + 2], RW[j + 2]), p)
        if not Y[i + 1, 0] > 0:
            lo, hi = 0.0, h
            while hi - lo > 1e-10 * max(abs(S[i]), 1.0):
                mid = 0.5 * (lo + hi)
                cm = tuple(float(x) for x in _coeffs(S[i] + mid / 2, Vf, Wf, n))
                c1 = tuple(float(x) for x in _coeffs(S[i] + mid, Vf, Wf, n))
                y_mid, _ = _rk4_step(Y[i], mid, c0, cm, c1, p)
                lo, hi = (mid, hi) if y_mid[0] > 0 else (lo, mid)
            return S[: i + 1], Y[: i + 1], D[: i + 1], S[i] + lo, Y[i]
    D[-1] = _rhs(Y[-1], R[-1], RV[-1], RW[-1], p)[1]
    return S, Y, D, None, Y[-1]


def solve_pbessel(V: WeightSpec, W: WeightSpec, p: float, n_eff: float, r0: float = 1e-3,
                  R: float = math.inf, init_slope: float = 0.0, phi0: float = 1.0,
                  steps: int = 4096, max_steps: int = 1 << 17) -> ShootResult:
    """Shoot ``phi`` from ``phi(r0) = phi0``, ``phi'(r0) = init_slope``.

    RK4 in ``s = log r`` on the flux system for ``(phi, r^{n-1} V |phi'|^{p-2} phi')``,
    up to ``R_trunc = min(R, 1e4 r0)``.  The step count doubles until the
    terminal value moves by at most 1e-6 relative.
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    if phi0 <= 0:
        raise ValueError("phi0 must be positive")
    R_trunc = min(R, 1e4 * r0)
    s0, s1 = math.log(r0), math.log(R_trunc)
    if float(V(r0)) <= 0:
        raise PositivityError("V must be positive at r0")
    q0 = r0 ** (n_eff - 1.0) * float(V(r0)) * math.copysign(abs(init_slope) ** (p - 1.0), init_slope)
    y0 = np.array([phi0, q0])
    prev = None
    n = max(int(steps), 4096)
    while True:
        S, Y, D, zero, last = _integrate(s0, s1, y0, n, V, W, p, n_eff)
        term = zero if zero is not None else last[0]
        if prev is not None:
            ref = max(abs(term), 1e-300)
            if abs(term - prev) <= 1e-6 * ref:
                break
        if n >= max_steps:
            raise ConvergenceError(f"shooting did not settle with {n} steps")
        prev = term
        n *= 2
    r = np.exp(S)
    phi_vals, dphi = Y[:, 0], D
    dds = r * dphi
    spline = CubicHermiteSpline(S, phi_vals, dds)
    d1 = spline.derivative(1)
    d2 = spline.derivative(2)

    def f(x):
        return spline(np.log(x))

    def df(x):
        return d1(np.log(x)) / x

    def d2f(x):
        t = np.log(x)
        return (d2(t) - d1(t)) / x ** 2

    hi = math.exp(zero) if zero is not None else R_trunc
    prof = RadialProfile(f, df, d2f, (r0, hi), "shot",
                         {"r0": r0, "R": hi, "phi0": phi0, "slope": init_slope})
    return ShootResult(prof, zero is None, (r0, hi), None if zero is None else math.exp(zero), n)
