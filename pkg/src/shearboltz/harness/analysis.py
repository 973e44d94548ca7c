"""Growth-rate fits and the weak-form residual check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..kernels import KernelMoments
from ..particle_sim import SimResult

TEST_FUNCTIONS = ("one", "v1v2", "v1sq", "speed2_cutoff")

CUTOFF_RADIUS = 50.0


def fit_growth_rate(times, values, offset: float = 0.0, final: float = 0.5) -> float:
    """Least-squares slope of ``log(values - offset)`` over the last ``final`` fraction of the window.

    ``offset`` removes a known constant (the stationary trace of the moment
    system) so the fit sees only the exponential part.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float) - offset
    if not 0 < final <= 1:
        raise ValueError("final must lie in (0, 1]")
    keep = t >= t[-1] - final * (t[-1] - t[0])
    if keep.sum() < 2:
        raise ValueError("need at least two points in the fitting window")
    if np.any(y[keep] <= 0):
        raise ValueError("non-positive values in the fitting window")
    slope, _ = np.polyfit(t[keep], np.log(y[keep]), 1)
    return float(slope)


def smooth_cutoff(v, n: float = CUTOFF_RADIUS) -> np.ndarray:
    """``exp(-1 / ((n^2 - |v|^2) n^5))`` inside the ball of radius ``n``, zero outside."""
    v = np.asarray(v, dtype=float)
    r2 = np.einsum("...i,...i->...", v, v)
    out = np.zeros_like(r2)
    inside = r2 < n * n
    out[inside] = np.exp(-1.0 / ((n * n - r2[inside]) * n**5))
    return out


def phi(name: str, v: np.ndarray, n: float = CUTOFF_RADIUS) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if name == "one":
        return np.ones(v.shape[:-1])
    if name == "v1v2":
        return v[..., 0] * v[..., 1]
    if name == "v1sq":
        return v[..., 0] ** 2
    if name == "speed2_cutoff":
        return np.einsum("...i,...i->...", v, v) * smooth_cutoff(v, n)
    raise ValueError(f"unsupported test function {name!r}; choose from {TEST_FUNCTIONS}")


def generator(name: str, v: np.ndarray, moments: KernelMoments, K: float) -> np.ndarray:
    """Per-particle ``-K v2 d1 phi + L* phi`` for quadratic test functions at gamma = 0.

    Averaging the collision response over ``v*`` and ``omega`` gives, for
    ``phi = v_j v_k``,
    ``L*phi(v) = -2 beta v_j v_k + (3 alpha - beta)/2 (v_j v_k + d_jk)
    + (beta - alpha)/2 (|v|^2 + 3) d_jk``.
    The cutoff variant uses the ``|v|^2`` formula; the two differ only
    beyond a fraction of the cutoff radius (checked by the caller).
    """
    a, b = moments.alpha, moments.beta
    v = np.asarray(v, dtype=float)
    v1, v2 = v[..., 0], v[..., 1]
    s2 = np.einsum("...i,...i->...", v, v)
    p = 0.5 * (3 * a - b)
    q = 0.5 * (b - a)
    if name == "one":
        return np.zeros(v.shape[:-1])
    if name == "v1v2":
        return -K * v2 * v2 + (p - 2 * b) * v1 * v2
    if name == "v1sq":
        return -2 * K * v1 * v2 + (p - 2 * b) * v1 * v1 + p + q * (s2 + 3)
    if name == "speed2_cutoff":
        return -2 * K * v1 * v2 - b * s2 + 3 * b
    raise ValueError(f"unsupported test function {name!r}; choose from {TEST_FUNCTIONS}")


@dataclass(frozen=True)
class WeakFormPoint:
    time: float
    lhs: float
    rhs: float
    residual: float
    se: float

    @property
    def z(self) -> float:
        if self.se == 0:
            return 0.0 if self.residual == 0 else math.inf
        return self.residual / self.se


def weak_form_residual(result: SimResult, name: str, moments: KernelMoments,
                       pairs=None) -> list[WeakFormPoint]:
    """Compare ``d/dt E phi`` with ``E[-K v2 d1 phi + L* phi]`` along a run.

    Each pair ``(t0, t1)`` of snapshot times gives one point at the midpoint:
    the left side is the central difference of the particle averages, the
    right side the trapezoid average of the generator. Both are built per
    particle, so the standard error accounts for their correlation.
    """
    if name not in TEST_FUNCTIONS:
        raise ValueError(f"unsupported test function {name!r}; choose from {TEST_FUNCTIONS}")
    cfg = result.config
    if cfg.kernel.gamma != 0.0:
        raise ValueError("closed-form generator requires gamma = 0")
    snaps = sorted(result.snapshots)
    if pairs is None:
        if len(snaps) % 2:
            raise ValueError("odd number of snapshots; pass explicit pairs")
        pairs = list(zip(snaps[::2], snaps[1::2]))
    out = []
    for t0, t1 in pairs:
        v0, v1 = result.snapshots[t0], result.snapshots[t1]
        if name == "speed2_cutoff":
            rmax = float(np.sqrt(max(np.max(np.sum(v0**2, axis=1)), np.max(np.sum(v1**2, axis=1)))))
            if rmax > 0.5 * CUTOFF_RADIUS:
                raise ValueError(f"speed {rmax:.3g} too close to the cutoff radius")
        dt = t1 - t0
        lhs_p = (phi(name, v1) - phi(name, v0)) / dt
        rhs_p = 0.5 * (generator(name, v0, moments, cfg.K) + generator(name, v1, moments, cfg.K))
        r = lhs_p - rhs_p
        n = r.size
        se = float(r.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        out.append(WeakFormPoint(0.5 * (t0 + t1), float(lhs_p.mean()), float(rhs_p.mean()),
                                 float(r.mean()), se))
    return out
