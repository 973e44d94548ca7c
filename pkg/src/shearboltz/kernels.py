"""Cut-off collision kernels ``B(n.w, |V|) = b(n.w) |V|**gamma`` and collision primitives.

The angular factor is un-normalised: the total angular mass is
``b_l1 = 2*pi * int_{-1}^{1} b(x) dx`` (``4*pi`` for ``b == 1``), so time is
measured in units fixed by that mass.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "QuadratureError",
    "CollisionKernel",
    "KernelMoments",
    "PRESETS",
    "kernel_moments",
    "scattering_rate",
    "ScatteringRateTable",
    "mean_speed_power",
    "relative_speed_moment",
    "sample_background",
    "sample_scatter_direction",
    "apply_collision",
]

PRESETS = ("constant", "quadratic")

# engine codes for the angular factor
B_CONSTANT, B_QUADRATIC, B_TABLE = 0, 1, 2


class QuadratureError(RuntimeError):
    """Raised when node doubling fails to reach the requested tolerance."""


def _gl_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _composite_gl(f: Callable[[np.ndarray], np.ndarray], edges: np.ndarray, n: int) -> float:
    x, w = _gl_rule(n)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    pts = half * x[None, :] + 0.5 * (a + b)
    return float(np.sum(half * w[None, :] * f(pts)))


def _adaptive_gl(
    f: Callable[[np.ndarray], np.ndarray],
    edges: np.ndarray,
    rtol: float = 1e-13,
    n0: int = 8,
    n_max: int = 1024,
) -> float:
    """Composite Gauss-Legendre with node doubling until two estimates agree."""
    prev = _composite_gl(f, edges, n0)
    n = n0
    while n < n_max:
        n *= 2
        cur = _composite_gl(f, edges, n)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise QuadratureError(f"Gauss-Legendre did not converge to rtol={rtol} with {n_max} nodes")


@dataclass(frozen=True)
class KernelMoments:
    alpha: float
    beta: float
    b_l1: float


@dataclass(frozen=True, eq=False)
class CollisionKernel:
    """Angular factor ``b`` on [-1, 1] together with the homogeneity ``gamma``.

    Build through :meth:`preset`, :meth:`from_table` or :meth:`from_csv`.
    """

    b: Callable[[np.ndarray], np.ndarray]
    gamma: float
    b_max: float
    name: str = "custom"
    code: int = B_TABLE
    table_x: np.ndarray = field(default_factory=lambda: np.array([-1.0, 1.0]))
    table_b: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0]))

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        probe = np.asarray(self.b(np.linspace(-1.0, 1.0, 2001)), dtype=float)
        if np.any(probe < 0):
            raise ValueError("angular factor b must be non-negative")
        if not np.any(probe > 0):
            raise ValueError("angular factor b is identically zero")
        if not self.b_max >= probe.max() * (1 - 1e-12):
            raise ValueError(f"b_max={self.b_max} below sampled max {probe.max()}")

    @classmethod
    def preset(cls, name: str, gamma: float = 0.0) -> "CollisionKernel":
        if name == "constant":
            return cls(b=lambda x: np.ones_like(np.asarray(x, dtype=float)), gamma=gamma,
                       b_max=1.0, name=name, code=B_CONSTANT)
        if name == "quadratic":
            return cls(b=lambda x: np.asarray(x, dtype=float) ** 2, gamma=gamma,
                       b_max=1.0, name=name, code=B_QUADRATIC)
        raise ValueError(f"unknown kernel preset {name!r}; choose from {PRESETS}")

    @classmethod
    def from_table(cls, x, bx, gamma: float = 0.0, name: str = "table") -> "CollisionKernel":
        x = np.asarray(x, dtype=float)
        bx = np.asarray(bx, dtype=float)
        if x.ndim != 1 or x.shape != bx.shape or x.size < 2:
            raise ValueError("table needs two equal-length 1-D columns")
        if np.any(np.diff(x) <= 0):
            raise ValueError("table x must be strictly increasing")
        if x[0] > -1.0 or x[-1] < 1.0:
            raise ValueError("table x must cover [-1, 1]")
        if np.any(bx < 0):
            raise ValueError("tabulated b must be non-negative")
        return cls(b=lambda t: np.interp(t, x, bx), gamma=gamma, b_max=float(bx.max()),
                   name=name, code=B_TABLE, table_x=x, table_b=bx)

    @classmethod
    def from_csv(cls, path: str | Path, gamma: float = 0.0) -> "CollisionKernel":
        xs, bs = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    xs.append(float(row[0]))
                    bs.append(float(row[1]))
                except ValueError:
                    if xs:  # a header is only tolerated on the first line
                        raise
        return cls.from_table(xs, bs, gamma=gamma, name=Path(path).stem)

    @property
    def breakpoints(self) -> np.ndarray:
        if self.code == B_TABLE:
            return np.clip(self.table_x[(self.table_x >= -1.0) & (self.table_x <= 1.0)], -1, 1)
        return np.array([-1.0, 1.0])

    @cached_property
    def moments(self) -> KernelMoments:
        return kernel_moments(self)

    def describe(self) -> dict:
        out = {"preset": self.name, "gamma": self.gamma, "b_max": self.b_max}
        if self.code == B_TABLE:
            out["table_x"] = self.table_x.tolist()
            out["table_b"] = self.table_b.tolist()
        return out


def kernel_moments(kernel: CollisionKernel) -> KernelMoments:
    """alpha, beta and the angular mass ``||b||_{L1(S^2)}``."""
    edges = np.unique(np.concatenate([[-1.0, 1.0], kernel.breakpoints]))
    b = kernel.b
    alpha = 2 * math.pi * _adaptive_gl(lambda x: b(x) * x**4, edges)
    beta = 2 * math.pi * _adaptive_gl(lambda x: b(x) * x**2, edges)
    b_l1 = 2 * math.pi * _adaptive_gl(lambda x: b(x), edges)
    out = KernelMoments(alpha=alpha, beta=beta, b_l1=b_l1)
    if not 0 < out.alpha <= out.beta <= out.b_l1:
        raise QuadratureError(f"moment chain alpha <= beta <= ||b|| violated: {out}")
    return out


def mean_speed_power(gamma: float) -> float:
    """E|Z|**gamma for a standard 3-D Gaussian Z."""
    return 2 ** (gamma / 2) * math.gamma((3 + gamma) / 2) / math.gamma(1.5)


_RADIAL_HALF_WIDTH = 12.0


def relative_speed_moment(r: float, gamma: float) -> float:
    """E|v - v*|**gamma with |v| = r and v* standard normal in 3-D.

    The noncentral chi(3) density of rho = |v - v*| is
    ``rho/(r sqrt(2 pi)) * exp(-(rho-r)^2/2) * (1 - exp(-2 rho r))``.
    """
    if gamma == 0.0:
        return 1.0
    if r < 0:
        raise ValueError("speed must be non-negative")
    norm = 1.0 / math.sqrt(2 * math.pi)

    def integrand(rho):
        if r == 0.0:
            weight = 2.0 * rho
        else:
            weight = -np.expm1(-2.0 * rho * r) / r
        return norm * rho ** (gamma + 1) * np.exp(-0.5 * (rho - r) ** 2) * weight

    lo = max(0.0, r - _RADIAL_HALF_WIDTH)
    hi = r + _RADIAL_HALF_WIDTH
    total = 0.0
    if lo == 0.0:
        # rho = u**2 smooths the rho**(gamma+2) behaviour at the origin
        total += _adaptive_gl(lambda u: 2 * u * integrand(u * u), np.linspace(0.0, 1.0, 3))
        lo = 1.0
    edges = np.arange(lo, hi + 1.0, 1.0)
    edges[-1] = hi
    total += _adaptive_gl(integrand, edges)
    return total


def scattering_rate(kernel: CollisionKernel, speed: float) -> float:
    """Total collision frequency ``nu(|v|)`` against the unit Maxwellian background."""
    if speed < 0:
        raise ValueError("speed must be non-negative")
    return kernel.moments.b_l1 * relative_speed_moment(float(speed), kernel.gamma)


class ScatteringRateTable:
    """``nu(r)`` tabulated on ``[0, r_max]`` (log-spaced) with cubic interpolation.

    Speeds beyond ``r_max`` are recomputed exactly.
    """

    def __init__(self, kernel: CollisionKernel, r_max: float = 100.0, n: int = 256):
        self.kernel = kernel
        self.r_max = float(r_max)
        self.grid = np.concatenate([[0.0], np.geomspace(1e-3, r_max, n - 1)])
        self.values = np.array([scattering_rate(kernel, r) for r in self.grid])
        self._spline = CubicSpline(self.grid, self.values)

    def __call__(self, speed):
        speed = np.asarray(speed, dtype=float)
        out = np.asarray(self._spline(np.minimum(speed, self.r_max)), dtype=float)
        far = speed > self.r_max
        if np.any(far):
            out = np.array(out, copy=True)
            out[far] = [scattering_rate(self.kernel, s) for s in speed[far]]
        return out if out.ndim else float(out)


def sample_background(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Background velocity ``v*`` from the unit Maxwellian (independent N(0,1) components)."""
    shape = (3,) if size is None else (size, 3)
    return rng.standard_normal(shape)


def _sample_cosine(kernel: CollisionKernel, u: np.ndarray) -> np.ndarray:
    """Inverse CDF of the density proportional to b(x) on [-1, 1]."""
    if kernel.code == B_CONSTANT:
        return 2.0 * u - 1.0
    if kernel.code == B_QUADRATIC:
        return np.cbrt(2.0 * u - 1.0)
    x, bx = kernel.table_x, kernel.table_b
    # piecewise-linear b gives a piecewise-quadratic CDF; invert per segment exactly
    seg_mass = 0.5 * (bx[1:] + bx[:-1]) * np.diff(x)
    cdf = np.concatenate([[0.0], np.cumsum(seg_mass)])
    target = u * cdf[-1]
    k = np.clip(np.searchsorted(cdf, target, side="right") - 1, 0, len(seg_mass) - 1)
    h = x[k + 1] - x[k]
    b0 = bx[k]
    slope = (bx[k + 1] - bx[k]) / h
    rem = target - cdf[k]
    # solve b0*s + slope*s^2/2 = rem for s in [0, h]
    disc = np.sqrt(np.maximum(b0 * b0 + 2.0 * slope * rem, 0.0))
    denom = b0 + disc
    s = np.where(denom > 0, 2.0 * rem / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(x[k] + np.minimum(s, h), -1.0, 1.0)


def _orthonormal_frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.where(np.abs(n[..., :1]) < 0.9, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(n, e1)
    return e1, e2


def sample_scatter_direction(kernel: CollisionKernel, v, v_star, rng: np.random.Generator) -> np.ndarray:
    """Draw ``omega`` on S^2 with density proportional to ``b(n . omega)``.

    Broadcasts over leading axes of ``v`` and ``v_star``.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    rel = v - v_star
    norm = np.linalg.norm(rel, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("degenerate collision: v == v_star")
    n = rel / norm
    shape = n.shape[:-1]
    x = _sample_cosine(kernel, rng.random(shape))[..., None]
    phi = 2 * np.pi * rng.random(shape)[..., None]
    e1, e2 = _orthonormal_frame(n)
    s = np.sqrt(np.maximum(1.0 - x * x, 0.0))
    omega = x * n + s * (np.cos(phi) * e1 + np.sin(phi) * e2)
    return omega / np.linalg.norm(omega, axis=-1, keepdims=True)


def apply_collision(v, v_star, omega) -> tuple[np.ndarray, np.ndarray]:
    """Post-collisional pair: ``v' = v - ((v - v*).w) w``, ``v*' = v* + ((v - v*).w) w``."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if np.any(np.abs(np.linalg.norm(omega, axis=-1) - 1.0) > 1e-12):
        raise ValueError("omega must be a unit vector")
    proj = np.sum((v - v_star) * omega, axis=-1, keepdims=True) * omega
    return v - proj, v_star + proj
