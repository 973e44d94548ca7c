"""Spectrum of the moment operator, the shear threshold K0 and the growing mode.

The characteristic polynomial factors as

    p(lambda) = (lambda + C1)^3 * g(lambda + C1),   g(y) = y^3 - 3 C2 y^2 - 2 C2 K^2,

and ``g`` has exactly one real root ``ybar > 0`` for ``K > 0``. The top
eigenvalue ``ybar - C1`` crosses zero at ``K0 = C1 sqrt((C1 - 3 C2) / (2 C2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .moment_dynamics import MomentMatrix, operator_from_constants

__all__ = [
    "SpectralReport",
    "GrowingMode",
    "ReconstructionParams",
    "reduced_cubic",
    "reduced_cubic_roots",
    "cubic_discriminant",
    "eigenvalues",
    "max_real_part",
    "find_K0",
    "K0_by_cubic_bisection",
    "K0_by_eigensolver",
    "growing_mode",
    "growing_mode_closed_form",
    "rescaled_eigenvector",
    "large_K_limit",
    "reconstruct_measure",
]


@dataclass(frozen=True)
class SpectralReport:
    C1: float
    C2: float
    K: float
    eigenvalues: tuple
    max_real_part: float
    K0: float
    stable: bool
    mu: float | None = None

    def to_dict(self) -> dict:
        return {
            "C1": self.C1,
            "C2": self.C2,
            "K": self.K,
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "max_real_part": self.max_real_part,
            "K0": self.K0,
            "stable": self.stable,
            "mu": self.mu,
        }


@dataclass(frozen=True)
class GrowingMode:
    mu: float
    eigvec: MomentMatrix
    K: float = field(default=float("nan"))


@dataclass(frozen=True)
class ReconstructionParams:
    A1: float
    A2: float
    A3: float
    beta_mass: float
    vbar: tuple = (1.0, 1.0, 0.0)

    def moments(self) -> MomentMatrix:
        """Second moments of ``F0(A1 v1^2 + A2 v2^2 + A3 v3^2) dv + beta_mass * delta_vbar``."""
        a1, a2, a3 = self.A1, self.A2, self.A3
        m11 = a1**-1.5 * a2**-0.5 * a3**-0.5 + self.beta_mass
        m22 = a1**-0.5 * a2**-1.5 * a3**-0.5 + self.beta_mass
        m33 = a1**-0.5 * a2**-0.5 * a3**-1.5
        return MomentMatrix(m11, self.beta_mass, 0.0, m22, 0.0, m33)


# -- compensated polynomial evaluation ----------------------------------------

_SPLITTER = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    z = s - a
    return s, (a - (s - z)) + (b - z)


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _comp_horner(coeffs, x):
    """Compensated Horner scheme (Graillat-Langlois-Louvet); coeffs highest degree first."""
    s = coeffs[0]
    c = 0.0
    for a in coeffs[1:]:
        p, pe = _two_prod(s, x)
        s, se = _two_sum(p, a)
        c = c * x + (pe + se)
    return s + c


def reduced_cubic(y, C2: float, K: float):
    return y**3 - 3 * C2 * y**2 - 2 * C2 * K**2


def cubic_discriminant(C2: float, K: float) -> float:
    return -216 * C2**4 * K**2 - 108 * C2**2 * K**4


def reduced_cubic_roots(C2: float, K: float) -> tuple[float, complex]:
    """Real root ``ybar > 0`` and the upper complex root ``a + ib`` (a < 0) of ``g``.

    Cardano on the depressed cubic ``z^3 - 3 C2^2 z - 2 C2 (C2^2 + K^2)`` with
    ``y = z + C2``, then Newton polishing with compensated evaluation.
    """
    if C2 <= 0 or K <= 0:
        raise ValueError("need C2 > 0 and K > 0")
    half_q = C2 * (C2 * C2 + K * K)
    root_disc = C2 * K * math.sqrt(2 * C2 * C2 + K * K)
    u = float(np.cbrt(half_q + root_disc))
    z = u + C2 * C2 / u  # second cube root from u*w = C2^2, avoids cancellation
    y = z + C2
    coeffs = (1.0, -3.0 * C2, 0.0, -2.0 * C2 * K * K)
    for _ in range(3):
        gy = _comp_horner(coeffs, y)
        dg = 3 * y * y - 6 * C2 * y
        step = gy / dg
        y -= step
        if abs(step) <= 1e-17 * abs(y):
            break
    a = (3 * C2 - y) / 2
    modulus2 = 2 * C2 * K * K / y
    b = math.sqrt(max(modulus2 - a * a, 0.0))
    return y, complex(a, b)


def eigenvalues(C1: float, C2: float, K: float) -> SpectralReport:
    """Spectrum from the factorised characteristic polynomial."""
    if C1 <= 0 or C2 <= 0 or K < 0:
        raise ValueError("need C1, C2 > 0 and K >= 0")
    K0 = find_K0(C1, C2)
    if K == 0:
        ev = [complex(-C1)] * 5 + [complex(3 * C2 - C1)]
    else:
        y, z = reduced_cubic_roots(C2, K)
        ev = [complex(-C1)] * 3 + [complex(y - C1), z - C1, z.conjugate() - C1]
    top = max(e.real for e in ev)
    stable = top < 0 and K != K0
    mu = top if top > 0 and K > K0 else None
    return SpectralReport(C1=C1, C2=C2, K=K, eigenvalues=tuple(ev), max_real_part=top,
                          K0=K0, stable=stable, mu=mu)


def max_real_part(C1: float, C2: float, K: float) -> float:
    """Largest real part of the spectrum from the dense 6x6 eigensolver."""
    return float(np.max(operator_from_constants(C1, C2, K).eigenvalues().real))


def find_K0(C1: float, C2: float) -> float:
    """Critical shear rate where the top eigenvalue crosses zero."""
    if not C1 > 3 * C2 > 0:
        raise ValueError("need C1 > 3 C2 > 0")
    return C1 * math.sqrt((C1 - 3 * C2) / (2 * C2))


def _bisect(f, lo: float, hi: float, rtol: float = 1e-15) -> float:
    flo = f(lo)
    if flo * f(hi) > 0:
        raise ValueError("bracket does not straddle a sign change")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return 0.5 * (lo + hi)


def _bracket(C1: float, C2: float) -> tuple[float, float]:
    # g(C1) = 0 at K0; ybar grows with K, so expand until the top eigenvalue is positive
    hi = 1.0
    while reduced_cubic_roots(C2, hi)[0] <= C1:
        hi *= 2
    return hi / 2 if hi > 1 else 1e-12, hi


def K0_by_cubic_bisection(C1: float, C2: float) -> float:
    lo, hi = _bracket(C1, C2)
    return _bisect(lambda K: reduced_cubic_roots(C2, K)[0] - C1, lo, hi)


def K0_by_eigensolver(C1: float, C2: float) -> float:
    lo, hi = _bracket(C1, C2)
    return _bisect(lambda K: max_real_part(C1, C2, K), lo, hi)


def growing_mode(C1: float, C2: float, K: float) -> GrowingMode:
    """Positive eigenvalue ``mu`` and its eigenvector normalised to ``m11 = 1``.

    The eigenvector solves the (11, 12, 22, 33) block of ``(A - mu I) M = 0``
    with the normalisation row appended, via an SVD-based least-squares solve.
    """
    K0 = find_K0(C1, C2)
    if not K > K0:
        raise ValueError(f"K={K} is not supercritical (K0={K0})")
    y, _ = reduced_cubic_roots(C2, K)
    mu = y - C1
    A = operator_from_constants(C1, C2, K).matrix
    sub = [0, 1, 3, 5]
    block = A[np.ix_(sub, sub)] - mu * np.eye(4)
    system = np.vstack([block, [1.0, 0.0, 0.0, 0.0]])
    rhs = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    x, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    x = x / x[0]
    vec = MomentMatrix(x[0], x[1], 0.0, x[2], 0.0, x[3])
    return GrowingMode(mu=mu, eigvec=vec, K=K)


def growing_mode_closed_form(C1: float, C2: float, K: float) -> GrowingMode:
    """Eigenvector from back-substitution: ``m22 = m33 = C2/(ybar - 2 C2)``, ``m12 = -K m22 / ybar``."""
    y, _ = reduced_cubic_roots(C2, K)
    m22 = C2 / (y - 2 * C2)
    m12 = -K * m22 / y
    return GrowingMode(mu=y - C1, eigvec=MomentMatrix(1.0, m12, 0.0, m22, 0.0, m22), K=K)


def rescaled_eigenvector(mode: GrowingMode) -> np.ndarray:
    """``(m11, K^{1/3} m12, K^{2/3} m22, K^{2/3} m33)``."""
    K = mode.K
    e = mode.eigvec
    return np.array([e.m11, K ** (1 / 3) * e.m12, K ** (2 / 3) * e.m22, K ** (2 / 3) * e.m33])


def large_K_limit(C2: float) -> tuple[float, np.ndarray]:
    """``theta = (2 C2)^{1/3}`` and the limiting rescaled eigenvector."""
    theta = (2 * C2) ** (1 / 3)
    return theta, np.array([1.0, -theta / 2, theta**2 / 2, theta**2 / 2])


def reconstruct_measure(mode: GrowingMode | MomentMatrix) -> ReconstructionParams:
    """Parameters of ``F0(A1 v1^2 + A2 v2^2 + A3 v3^2) dv + beta_mass delta_{(1,1,0)}``.

    ``F0`` is the standard Gaussian profile (unit second moments per axis).
    The atom carries ``beta_mass = m12``, which is negative for every
    supercritical mode, so the result is a signed measure in that case.
    """
    M = mode.eigvec if isinstance(mode, GrowingMode) else mode
    bm = M.m12
    p11 = M.m11 - bm
    p22 = M.m22 - bm
    if not (p11 > 0 and p22 > 0 and M.m33 > 0):
        raise ValueError("need m11 - m12 > 0, m22 - m12 > 0 and m33 > 0")
    # log A_i = (q_j + q_k - 4 q_i) / 5 with q the logs of (p11, p22, m33)
    A3 = (p22 * p11 / M.m33**4) ** 0.2
    A2 = M.m33**0.2 * p11**0.2 / p22**0.8
    A1 = (p22 * M.m33) ** 0.2 / p11**0.8
    return ReconstructionParams(A1=A1, A2=A2, A3=A3, beta_mass=bm)
