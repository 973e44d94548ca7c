"""Closed second-moment dynamics for Maxwell-type kernels (gamma = 0).

For ``M_jk = <v_j v_k>`` the moments obey the linear system
``dM/dt = A(M) + c I`` with

    A(M) = -(L M + M L^T) - C1 M + C2 tr(M) I,    L = K e1 e2^T,
    C1 = (5 beta - 3 alpha) / 2,   C2 = (beta - alpha) / 2.

A symmetric matrix is handled as the 6-vector (11, 12, 13, 22, 23, 33).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kernels import KernelMoments, apply_collision

__all__ = [
    "ResonanceError",
    "MomentMatrix",
    "MomentOperator",
    "build_operator",
    "operator_from_constants",
    "matrix_exponential",
    "evolve",
    "stationary_moments",
    "trace_solution",
    "povzner_check",
    "povzner_ratio",
    "find_povzner_constant",
    "sample_povzner_triples",
    "boundedness_constants",
]

_IDX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
IDENTITY6 = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 1.0])


class ResonanceError(ArithmeticError):
    """The moment operator has an eigenvalue at zero (shear rate at the threshold)."""


@dataclass(frozen=True)
class MomentMatrix:
    m11: float
    m12: float
    m13: float
    m22: float
    m23: float
    m33: float

    @classmethod
    def from_vector(cls, vec) -> "MomentMatrix":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (6,):
            raise ValueError(f"expected 6 entries, got shape {vec.shape}")
        return cls(*map(float, vec))

    @classmethod
    def from_matrix(cls, mat) -> "MomentMatrix":
        mat = np.asarray(mat, dtype=float)
        if mat.shape != (3, 3):
            raise ValueError("expected a 3x3 matrix")
        sym = 0.5 * (mat + mat.T)
        return cls.from_vector([sym[i, j] for i, j in _IDX])

    @classmethod
    def identity(cls, scale: float = 1.0) -> "MomentMatrix":
        return cls.from_vector(scale * IDENTITY6)

    def as_vector(self) -> np.ndarray:
        return np.array([self.m11, self.m12, self.m13, self.m22, self.m23, self.m33])

    def as_matrix(self) -> np.ndarray:
        return np.array([
            [self.m11, self.m12, self.m13],
            [self.m12, self.m22, self.m23],
            [self.m13, self.m23, self.m33],
        ])

    @property
    def trace(self) -> float:
        return self.m11 + self.m22 + self.m33

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.as_matrix())[0])

    def is_physical(self, tol: float = 1e-10) -> bool:
        return self.min_eigenvalue() >= -tol


@dataclass(frozen=True, eq=False)
class MomentOperator:
    C1: float
    C2: float
    K: float
    source_c: float
    matrix: np.ndarray

    @property
    def beta(self) -> float:
        return self.C1 - 3.0 * self.C2

    @property
    def source(self) -> np.ndarray:
        return self.source_c * IDENTITY6

    def apply(self, M: MomentMatrix) -> MomentMatrix:
        return MomentMatrix.from_vector(self.matrix @ M.as_vector())

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)


def _assemble(C1: float, C2: float, K: float) -> np.ndarray:
    d = C2 - C1
    return np.array([
        [d, -2 * K, 0.0, C2, 0.0, C2],
        [0.0, -C1, 0.0, -K, 0.0, 0.0],
        [0.0, 0.0, -C1, 0.0, -K, 0.0],
        [C2, 0.0, 0.0, d, 0.0, C2],
        [0.0, 0.0, 0.0, 0.0, -C1, 0.0],
        [C2, 0.0, 0.0, C2, 0.0, d],
    ])


def operator_from_constants(C1: float, C2: float, K: float, source_c: float = 0.0) -> MomentOperator:
    if K < 0:
        raise ValueError("shear rate K must be non-negative")
    return MomentOperator(C1=float(C1), C2=float(C2), K=float(K), source_c=float(source_c),
                          matrix=_assemble(C1, C2, K))


def build_operator(moments: KernelMoments, K: float, source_c: float | None = None) -> MomentOperator:
    """Moment operator for kernel constants ``alpha, beta``; ``source_c`` defaults to beta."""
    alpha, beta = moments.alpha, moments.beta
    C1 = -(3 * alpha - 5 * beta) / 2
    C2 = (beta - alpha) / 2
    return operator_from_constants(C1, C2, K, beta if source_c is None else source_c)


def matrix_exponential(A: np.ndarray, t: float) -> np.ndarray:
    """``exp(tA)`` by scaling and squaring with a degree-13 Pade approximant."""
    return scipy.linalg.expm(t * np.asarray(A, dtype=float))


def _eig_exponential(A: np.ndarray, t: float) -> np.ndarray:
    w, V = np.linalg.eig(A)
    return np.real(V @ np.diag(np.exp(t * w)) @ np.linalg.inv(V))


def _check_resonance(op: MomentOperator, tol: float = 1e-10) -> None:
    ev = op.eigenvalues()
    if np.min(np.abs(ev)) < tol:
        raise ResonanceError(f"eigenvalue {ev[np.argmin(np.abs(ev))]} at K={op.K}: no stationary moments")


def stationary_moments(op: MomentOperator) -> MomentMatrix:
    """Solve ``A(M) = -c I``."""
    _check_resonance(op)
    rhs = -op.source
    sol = np.linalg.solve(op.matrix, rhs)
    # one step of iterative refinement
    sol = sol + np.linalg.solve(op.matrix, rhs - op.matrix @ sol)
    return MomentMatrix.from_vector(sol)


def evolve(op: MomentOperator, M0: MomentMatrix, t: float) -> MomentMatrix:
    """Exact solution ``M(t) = e^{tA}(M0 - M_st) + M_st``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return M0
    if op.source_c == 0.0:
        return MomentMatrix.from_vector(matrix_exponential(op.matrix, t) @ M0.as_vector())
    st = stationary_moments(op).as_vector()
    vec = matrix_exponential(op.matrix, t) @ (M0.as_vector() - st) + st
    return MomentMatrix.from_vector(vec)


def evolve_eig(op: MomentOperator, M0: MomentMatrix, t: float) -> MomentMatrix:
    """Same as :func:`evolve` through an eigendecomposition (audit path)."""
    st = stationary_moments(op).as_vector() if op.source_c else np.zeros(6)
    vec = _eig_exponential(op.matrix, t) @ (M0.as_vector() - st) + st
    return MomentMatrix.from_vector(vec)


def trace_solution(op: MomentOperator, m0: float, t: float) -> float:
    """Closed-form trace at K = 0: ``m(t) = 3c/beta + (m0 - 3c/beta) exp(-beta t)``."""
    if op.K != 0:
        raise ValueError("trace dynamics close only at K = 0")
    beta = op.beta
    m_inf = 3 * op.source_c / beta
    return m_inf + (m0 - m_inf) * np.exp(-beta * t)


def boundedness_constants(op: MomentOperator) -> tuple[float, float]:
    """(C_bar, C_tilde) with ``||M(t)||_inf <= C_bar ||M0||_inf + C_tilde`` for all t >= 0.

    ``||e^{tA}||`` is bounded through the eigenbasis: ``|V| |V^-1|`` row sums
    in the max-entry norm of symmetric matrices.
    """
    ev, V = np.linalg.eig(op.matrix)
    if np.max(ev.real) >= 0:
        raise ResonanceError("operator is not stable; moments are unbounded")
    Vi = np.linalg.inv(V)
    # max over t of |e^{tA}|_inf(6-vector) <= || |V| |V^-1| ||_inf
    G = np.abs(V) @ np.abs(Vi)
    c_bar_vec = float(np.max(G.sum(axis=1)))
    st = stationary_moments(op).as_vector()
    c_tilde = c_bar_vec * float(np.max(np.abs(st))) + float(np.max(np.abs(st)))
    return c_bar_vec, c_tilde


# -- Povzner-type estimate ---------------------------------------------------


def _norm(x):
    return np.linalg.norm(x, axis=-1)


def povzner_ratio(v, v_star, omega, s: float) -> np.ndarray:
    """Smallest constant making the Povzner inequality hold for each triple.

    ``|v'|^s - |v|^s <= -|v|^s + C (|v|^{s-1}|v*| + |v*|^{s-1}|v|)`` reduces to
    ``|v'|^s <= C * rhs``; returns ``|v'|^s / rhs`` (``inf`` where rhs = 0 < lhs).
    """
    v_prime, _ = apply_collision(v, v_star, omega)
    a = _norm(np.asarray(v, dtype=float))
    b = _norm(np.asarray(v_star, dtype=float))
    lhs = _norm(v_prime) ** s
    rhs = a ** (s - 1) * b + b ** (s - 1) * a
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 0, np.inf, 0.0))
    return out


def povzner_check(v, v_star, omega, s: float, Cs: float):
    """True where ``|v'|^s - |v|^s <= -|v|^s + Cs (|v|^{s-1}|v*| + |v*|^{s-1}|v|)``.

    At ``v = 0`` the check passes only when ``v* = 0``.
    """
    if not 2.0 < s < 3.0:
        raise ValueError("s must lie in (2, 3)")
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    v_prime, _ = apply_collision(v, v_star, omega)
    a = _norm(v)
    b = _norm(v_star)
    lhs = _norm(v_prime) ** s - a**s
    rhs = -(a**s) + Cs * (a ** (s - 1) * b + b ** (s - 1) * a)
    ok = lhs <= rhs + 1e-12 * np.maximum(np.abs(lhs), np.abs(rhs))
    ok = np.where(a == 0, b == 0, ok)
    return bool(ok) if np.ndim(ok) == 0 else ok


def sample_povzner_triples(n: int, seed: int = 0, speed_range=(0.01, 100.0), quasi: bool = True):
    """Triples with log-uniform speeds in ``speed_range`` and uniform directions.

    ``quasi=True`` uses a scrambled Sobol sequence, otherwise a plain PRNG.
    """
    lo, hi = np.log(speed_range[0]), np.log(speed_range[1])
    if quasi:
        from scipy.stats import qmc

        u = qmc.Sobol(d=8, scramble=True, seed=seed).random(n)
    else:
        u = np.random.default_rng(seed).random((n, 8))

    def direction(z, phi):
        z = 2 * z - 1
        s = np.sqrt(1 - z * z)
        phi = 2 * np.pi * phi
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)

    speed_v = np.exp(lo + (hi - lo) * u[:, 0])
    speed_s = np.exp(lo + (hi - lo) * u[:, 1])
    v = speed_v[:, None] * direction(u[:, 2], u[:, 3])
    v_star = speed_s[:, None] * direction(u[:, 4], u[:, 5])
    omega = direction(u[:, 6], u[:, 7])
    return v, v_star, omega


def find_povzner_constant(s: float, n_samples: int, seed: int = 0, max_exponent: int = 16) -> float:
    """Smallest power of two ``Cs`` passing :func:`povzner_check` on quasi-random triples."""
    if not 2.0 < s < 3.0:
        raise ValueError("s must lie in (2, 3)")
    v, v_star, omega = sample_povzner_triples(n_samples, seed=seed)
    # coarse start from the largest per-triple requirement, then doubling
    need = float(np.max(povzner_ratio(v, v_star, omega, s)))
    exponent = max(0, int(np.floor(np.log2(need))) - 1) if np.isfinite(need) and need > 0 else 0
    while exponent <= max_exponent:
        Cs = float(2**exponent)
        if np.all(povzner_check(v, v_star, omega, s, Cs)):
            return Cs
        exponent += 1
    raise RuntimeError(f"no Povzner constant up to 2**{max_exponent} for s={s}")
