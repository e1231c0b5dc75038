"""The remainder functional R_p and a numerical lower constant for it."""
from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .errors import RegimeError

__all__ = ["rp", "rp_scalar", "rp_ratio_2d", "mp_lower_bound"]


def rp(a_vec, b_vec, p: float):
    """``|b|^p + (p-1)|a|^p - p |a|^{p-2} a.b`` over the last axis.

    Inputs broadcast; the last axis holds vector components.  The cross
    term is taken as 0 where ``a = 0``.
    """
    a = np.asarray(a_vec, dtype=float)
    b = np.asarray(b_vec, dtype=float)
    if a.ndim == 0:
        a = a[None]
    if b.ndim == 0:
        b = b[None]
    if p == 2:
        return np.sum((a - b) ** 2, axis=-1)
    na = np.sqrt(np.sum(a * a, axis=-1))
    nb = np.sqrt(np.sum(b * b, axis=-1))
    dot = np.sum(a * b, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = np.where(na > 0, na ** (p - 2) * dot, 0.0)
    return nb ** p + (p - 1) * na ** p - p * cross


def rp_scalar(a, b, p: float):
    """Elementwise R_p for scalar (one-component) arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if p == 2:
        return (a - b) ** 2
    return np.abs(b) ** p + (p - 1) * np.abs(a) ** p - p * np.abs(a) ** (p - 1) * np.sign(a) * b


def rp_ratio_2d(rho, theta, p: float):
    """``R_p(a, b) / |b - a|^p`` at ``a = (1, 0)``, ``b = rho (cos theta, sin theta)``.

    Every planar pair with ``a != 0`` reduces to this by rotation and
    p-homogeneity.
    """
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta)
    dist2 = 1.0 + rho * rho - 2.0 * rho * c
    num = rho ** p + (p - 1.0) - p * rho * c
    with np.errstate(divide="ignore", invalid="ignore"):
        return num / dist2 ** (p / 2.0)


def mp_lower_bound(p: float, sample_budget: int = 64 * 4096, refine: bool = True) -> float:
    """Estimate ``M_p = inf R_p(a,b)/|b-a|^p`` for ``p >= 2``.

    Scans ``|b|/|a|`` on a log grid spanning ``[1e-6, 1e6]`` (all ratios of
    two radii in ``[1e-3, 1e3]``) against 64 angles, then polishes the best
    grid point with a local search in ``(log rho, theta)``.  Pairs with
    ``a = 0`` contribute exactly 1.
    """
    if p < 2:
        raise RegimeError(f"M_p needs p >= 2, got {p}")
    if p == 2:
        return 1.0
    n_angle = 64
    n_ratio = max(16, int(sample_budget) // n_angle)
    rho = np.logspace(-6.0, 6.0, n_ratio)
    theta = np.linspace(0.0, 2.0 * np.pi, n_angle, endpoint=False)
    R, T = np.meshgrid(rho, theta, indexing="ij")
    dist = np.sqrt(1.0 + R * R - 2.0 * R * np.cos(T))
    vals = np.where(dist >= 1e-12, rp_ratio_2d(R, T, p), np.inf)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    best = min(1.0, float(vals[k]))
    if refine and best < 1.0:
        def obj(x):
            v = rp_ratio_2d(np.exp(x[0]), x[1], p)
            return float(v) if np.isfinite(v) else np.inf

        res = minimize(obj, [np.log(R[k]), T[k]], method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        if res.fun < best:
            best = float(res.fun)
    return best
