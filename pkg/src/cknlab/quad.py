"""Adaptive quadrature for radial integrals on (0, inf) and polar integrals in 2D.

Radial integrals are computed after the substitution ``r = exp(t)``, which
turns power singularities at the origin into exponentially decaying tails
in ``t``.  Infinite ranges in ``t`` are truncated using asymptotic decay
metadata (an :class:`Envelope`) supplied by the caller.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConvergenceError, IntegrabilityError

__all__ = [
    "Envelope",
    "QuadResult",
    "QuadRule",
    "integrate_radial",
    "radial_rule",
    "integrate_polar2d",
    "integrate_sector",
]

DEFAULT_REL_TOL = 1e-10
DEFAULT_ABS_TOL = 1e-14
MAX_DEPTH = 60
MAX_NODES = 1_000_000

# Kronrod 15-point abscissae (non-negative half) and weights; Gauss 7-point
# weights sit on the odd-indexed abscissae.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# full 15-node layout on [-1, 1]
NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]
GAUSS_WEIGHTS[[9, 11, 13]] = _WG[2::-1]


@dataclass(frozen=True)
class Envelope:
    """Asymptotic model ``log|h(r)| ~ k*log(r) - c*r**m`` near one endpoint.

    ``h`` is the integrand *without* the ``dr`` measure.  At the origin the
    exponential factor matters only when ``m < 0``; at infinity only when
    ``m > 0``.  A negative ``c`` in the relevant direction means growth.
    """

    k: float
    c: float = 0.0
    m: float = 1.0

    def at_origin(self) -> "Envelope":
        return self if self.m < 0 and self.c != 0 else Envelope(self.k, 0.0, 1.0)

    def at_infinity(self) -> "Envelope":
        return self if self.m > 0 and self.c != 0 else Envelope(self.k, 0.0, 1.0)

    def __mul__(self, other: "Envelope") -> "Envelope":
        k = self.k + other.k
        if self.c == 0:
            return Envelope(k, other.c, other.m)
        if other.c == 0:
            return Envelope(k, self.c, self.m)
        if self.m == other.m:
            return Envelope(k, self.c + other.c, self.m)
        # the factor with the larger |m| dominates in its own direction
        dom = self if abs(self.m) > abs(other.m) else other
        return Envelope(k, dom.c, dom.m)

    def __pow__(self, p: float) -> "Envelope":
        return Envelope(p * self.k, p * self.c, self.m)

    def shift(self, dk: float) -> "Envelope":
        return Envelope(self.k + dk, self.c, self.m)

    def slower(self, other: "Envelope", at_origin: bool) -> "Envelope":
        """The envelope of a sum: whichever term decays more slowly."""
        a = self.at_origin() if at_origin else self.at_infinity()
        b = other.at_origin() if at_origin else other.at_infinity()
        if a.c != b.c:
            return a if a.c < b.c else b
        if at_origin:
            return a if a.k <= b.k else b
        return a if a.k >= b.k else b

    def log_slope(self, t: float) -> float:
        """d/dt of the modelled log of ``h(e^t) e^t``."""
        if self.c == 0:
            return self.k + 1.0
        return self.k + 1.0 - self.c * self.m * math.exp(self.m * t)


@dataclass(frozen=True)
class QuadResult:
    value: float
    abs_error_estimate: float
    nodes_used: int
    converged: bool

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class QuadRule:
    """A fixed rule ``sum(w * g(r))`` approximating ``int g(r) r**gamma dr``."""

    r: np.ndarray
    w: np.ndarray

    def __call__(self, values: np.ndarray) -> float:
        return float(np.dot(self.w, values))


def _gk_panels(phi, a: np.ndarray, b: np.ndarray):
    """Evaluate the 15/7 pair on panels [a_i, b_i]; returns (K, G, |K|-abs, t)."""
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    t = mid[:, None] + half[:, None] * NODES[None, :]
    y = phi(t.ravel()).reshape(t.shape)
    y = np.where(np.isfinite(y), y, np.nan)
    k = half * (y @ KRONROD_WEIGHTS)
    g = half * (y @ GAUSS_WEIGHTS)
    resabs = np.abs(half) * (np.abs(y) @ KRONROD_WEIGHTS)
    return k, g, resabs, t


def _adaptive(phi, t_lo: float, t_hi: float, rel_tol: float, abs_tol: float,
              keep_rule: bool = False):
    """Globally adaptive 15-point Gauss-Kronrod bisection on [t_lo, t_hi]."""
    width = t_hi - t_lo
    n0 = int(min(64, max(4, math.ceil(width / 1.5))))
    edges = np.linspace(t_lo, t_hi, n0 + 1)
    a, b = edges[:-1], edges[1:]
    depth = np.zeros(n0, dtype=int)
    k, g, resabs, tn = _gk_panels(phi, a, b)
    if np.isnan(k).any():
        raise ConvergenceError("integrand returned non-finite values")
    err = np.abs(k - g)
    nodes = 15 * n0
    eps = np.finfo(float).eps
    while True:
        total = float(k.sum())
        total_err = float(err.sum())
        tol = max(abs_tol, rel_tol * abs(total))
        # panels whose error is already at roundoff level are not refined
        limited = err <= 50.0 * eps * resabs
        if total_err <= tol:
            converged = True
            break
        active = ~limited
        if not active.any():
            converged = False
            break
        # split panels in order of decreasing local error until the rest
        # of the error budget fits the tolerance
        order = np.argsort(-np.where(active, err, -1.0))
        cum = total_err - np.cumsum(err[order])
        nsplit = int(np.searchsorted(-cum, -0.5 * tol)) + 1
        nsplit = min(nsplit, int(active.sum()))
        nsplit = max(nsplit, min(int(active.sum()), max(1, len(a) // 8)))
        pick = order[:nsplit]
        if nodes + 30 * nsplit > MAX_NODES:
            raise ConvergenceError(
                f"node budget {MAX_NODES} exhausted; error {total_err:.3e} > {tol:.3e}")
        if depth[pick].max() >= MAX_DEPTH:
            raise ConvergenceError(
                f"bisection depth {MAX_DEPTH} reached; error {total_err:.3e} > {tol:.3e}")
        pa, pb = a[pick], b[pick]
        pm = 0.5 * (pa + pb)
        na = np.concatenate([pa, pm])
        nb = np.concatenate([pm, pb])
        nk, ng, nres, ntn = _gk_panels(phi, na, nb)
        if np.isnan(nk).any():
            raise ConvergenceError("integrand returned non-finite values")
        nodes += 15 * len(na)
        keep = np.ones(len(a), dtype=bool)
        keep[pick] = False
        ndepth = np.concatenate([depth[pick] + 1, depth[pick] + 1])
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        depth = np.concatenate([depth[keep], ndepth])
        k = np.concatenate([k[keep], nk])
        g = np.concatenate([g[keep], ng])
        resabs = np.concatenate([resabs[keep], nres])
        err = np.abs(k - g)
        if keep_rule:
            tn = np.concatenate([tn[keep], ntn])
    result = QuadResult(total, total_err, nodes, converged)
    if keep_rule:
        half = 0.5 * (b - a)
        w = half[:, None] * KRONROD_WEIGHTS[None, :]
        return result, tn.ravel(), w.ravel()
    return result


def _find_cut(phi, t_start: float, direction: int, env: Optional[Envelope],
              thresh: float) -> float:
    """March from ``t_start`` toward -inf (direction=-1) or +inf (+1) until the
    t-space integrand and its modelled tail are below ``thresh``."""
    t = t_start
    hits = 0
    for _ in range(4000):
        if env is not None:
            slope = env.log_slope(t)
            decaying = slope * direction < 0
            mag = abs(float(phi(np.array([t]))[0]))
            if decaying and mag / abs(slope) < thresh:
                hits += 1
                if hits >= 3:
                    return t
            else:
                hits = 0
            # step size from the model: aim for roughly a decade per step
            step = 1.0 if not decaying else min(4.0, max(0.25, math.log(10.0) / abs(slope)))
        else:
            mag = abs(float(phi(np.array([t]))[0]))
            hits = hits + 1 if mag < thresh else 0
            if hits >= 5:
                return t
            step = 0.5
        t += direction * step
        if abs(t) > 745.0:
            break
    raise IntegrabilityError([
        f"integrand does not decay toward {'infinity' if direction > 0 else 'the origin'}"])


def _prepare(g: Callable, lo: float, hi: float, exponent: float,
             lo_env: Optional[Envelope], hi_env: Optional[Envelope],
             rel_tol: float, abs_tol: float):
    if not (0.0 <= lo < hi):
        raise ValueError(f"invalid interval [{lo}, {hi}]")

    def phi(t):
        r = np.exp(t)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
            v = np.asarray(g(r), dtype=float) * np.exp((exponent + 1.0) * t)
        return np.where(np.isnan(v) & (r == 0.0), 0.0, v)

    finite_lo = lo > 0.0
    finite_hi = math.isfinite(hi)
    if finite_lo and finite_hi:
        return phi, math.log(lo), math.log(hi), 0.0
    # reference point inside the domain and a scale estimate for the cut-off
    if finite_lo:
        t_ref = math.log(lo) + 1.0
    elif finite_hi:
        t_ref = math.log(hi) - 1.0
    else:
        t_ref = 0.0
    probe_lo = math.log(lo) if finite_lo else t_ref - 20.0
    probe_hi = math.log(hi) if finite_hi else t_ref + 20.0
    probe = np.linspace(probe_lo, probe_hi, 161)
    mags = np.abs(phi(probe))
    mags = np.where(np.isfinite(mags), mags, 0.0)
    scale = float(mags.max())
    t_peak = float(probe[int(mags.argmax())]) if scale > 0 else t_ref
    thresh = max(abs_tol, rel_tol * scale) * 1e-3
    if finite_lo:
        t_lo = math.log(lo)
    else:
        t_lo = _find_cut(phi, min(t_ref, t_peak), -1,
                         lo_env.at_origin() if lo_env else None, thresh)
    if finite_hi:
        t_hi = math.log(hi)
    else:
        t_hi = _find_cut(phi, max(t_ref, t_peak), +1,
                         hi_env.at_infinity() if hi_env else None, thresh)
    if t_hi <= t_lo:
        t_hi = t_lo + 1.0
    tail = thresh * ((not finite_lo) + (not finite_hi))
    return phi, t_lo, t_hi, tail


def integrate_radial(g: Callable, interval=(0.0, math.inf), dim_weight_exponent: float = 0.0,
                     rel_tol: float = DEFAULT_REL_TOL, abs_tol: float = DEFAULT_ABS_TOL,
                     lo_env: Optional[Envelope] = None,
                     hi_env: Optional[Envelope] = None) -> QuadResult:
    """Compute ``int_lo^hi g(r) r**dim_weight_exponent dr``.

    ``g`` must accept numpy arrays.  ``lo_env``/``hi_env`` describe the
    asymptotic decay of ``g(r) r**dim_weight_exponent`` at a zero lower
    limit or an infinite upper limit; without them the cut-off is found by
    a plain magnitude scan.
    """
    lo, hi = interval
    phi, t_lo, t_hi, tail = _prepare(g, float(lo), float(hi), dim_weight_exponent,
                                     lo_env, hi_env, rel_tol, abs_tol)
    res = _adaptive(phi, t_lo, t_hi, rel_tol, abs_tol)
    return QuadResult(res.value, res.abs_error_estimate + tail, res.nodes_used, res.converged)


def radial_rule(g: Callable, interval=(0.0, math.inf), dim_weight_exponent: float = 0.0,
                rel_tol: float = DEFAULT_REL_TOL, abs_tol: float = DEFAULT_ABS_TOL,
                lo_env: Optional[Envelope] = None,
                hi_env: Optional[Envelope] = None) -> tuple[QuadResult, QuadRule]:
    """Like :func:`integrate_radial` but also return the final node set.

    The rule integrates ``h(r) r**dim_weight_exponent`` for any ``h`` that is
    resolved by the same partition (useful for repeated evaluation of
    related integrands, e.g. inside an optimizer).
    """
    lo, hi = interval
    phi, t_lo, t_hi, tail = _prepare(g, float(lo), float(hi), dim_weight_exponent,
                                     lo_env, hi_env, rel_tol, abs_tol)
    res, tn, w = _adaptive(phi, t_lo, t_hi, rel_tol, abs_tol, keep_rule=True)
    res = QuadResult(res.value, res.abs_error_estimate + tail, res.nodes_used, res.converged)
    r = np.exp(tn)
    w = w * np.exp((dim_weight_exponent + 1.0) * tn)
    return res, QuadRule(r, w)


def _theta_mean(h, r, n):
    theta = 2.0 * np.pi * np.arange(n) / n
    vals = h(r[:, None], theta[None, :])
    return np.asarray(vals, dtype=float).mean(axis=1)


def integrate_polar2d(h: Callable, r_interval=(0.0, math.inf), rel_tol: float = DEFAULT_REL_TOL,
                      abs_tol: float = DEFAULT_ABS_TOL, lo_env: Optional[Envelope] = None,
                      hi_env: Optional[Envelope] = None) -> QuadResult:
    """``int int h(r, theta) r dr dtheta`` over an annulus times the full circle.

    Angular averages use the periodic trapezoid rule with 64 nodes, then 128;
    the two values must agree to ``rel_tol``.  ``h`` is called with
    broadcastable arrays ``r[:, None]`` and ``theta[None, :]``.
    """
    coarse = integrate_radial(lambda r: 2.0 * np.pi * _theta_mean(h, r, 64), r_interval, 1.0,
                              rel_tol, abs_tol, lo_env, hi_env)
    fine = integrate_radial(lambda r: 2.0 * np.pi * _theta_mean(h, r, 128), r_interval, 1.0,
                            rel_tol, abs_tol, lo_env, hi_env)
    drift = abs(fine.value - coarse.value)
    if drift > max(abs_tol, rel_tol * abs(fine.value)) + coarse.abs_error_estimate + fine.abs_error_estimate:
        raise ConvergenceError(
            f"angular doubling moved the value by {drift:.3e} (value {fine.value:.6e})")
    return QuadResult(fine.value, fine.abs_error_estimate + drift,
                      coarse.nodes_used * 64 + fine.nodes_used * 128, fine.converged)


def integrate_sector(h: Callable, r_interval, theta_interval, rel_tol: float = DEFAULT_REL_TOL,
                     abs_tol: float = DEFAULT_ABS_TOL, lo_env: Optional[Envelope] = None,
                     hi_env: Optional[Envelope] = None) -> QuadResult:
    """``int int h(r, theta) r dr dtheta`` over a sector, Gauss-Legendre in theta.

    Used where the angular integrand is smooth on the sector but not periodic
    (monomial weights on a half plane).  32 then 64 angular nodes.
    """
    th0, th1 = theta_interval
    results = []
    for n in (32, 64):
        x, w = np.polynomial.legendre.leggauss(n)
        theta = 0.5 * (th1 - th0) * x + 0.5 * (th1 + th0)
        ww = 0.5 * (th1 - th0) * w

        def g(r, theta=theta, ww=ww):
            vals = np.asarray(h(r[:, None], theta[None, :]), dtype=float)
            return vals @ ww

        results.append(integrate_radial(g, r_interval, 1.0, rel_tol, abs_tol, lo_env, hi_env))
    coarse, fine = results
    drift = abs(fine.value - coarse.value)
    if drift > max(abs_tol, rel_tol * abs(fine.value)) + coarse.abs_error_estimate + fine.abs_error_estimate:
        raise ConvergenceError(f"angular refinement moved the value by {drift:.3e}")
    return QuadResult(fine.value, fine.abs_error_estimate + drift,
                      coarse.nodes_used * 32 + fine.nodes_used * 64, fine.converged)
