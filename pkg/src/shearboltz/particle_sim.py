"""Tagged-particle Monte Carlo for the linear collision operator under simple shear.

Particles drift along ``(v1 - K v2 t, v2, v3)`` between collisions and
scatter off Maxwellian background partners. Collision times come from
windowed thinning (see :mod:`shearboltz._engine`), which is exact for the
velocity-dependent rate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from . import _engine
from .kernels import CollisionKernel, mean_speed_power
from .moment_dynamics import MomentMatrix

__all__ = [
    "SimulationError",
    "InitialCondition",
    "SimConfig",
    "Ensemble",
    "MomentEstimate",
    "SimResult",
    "default_substep",
    "shear_drift",
    "run",
    "estimate_moments",
    "stationarity_test",
    "selfsim_diagnostic",
    "interarrival_times",
    "exponential_gof",
]

log = logging.getLogger(__name__)

CHUNK_SIZE = 65536

_IDX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


class SimulationError(RuntimeError):
    """Raised when a particle trajectory leaves the envelope or becomes non-finite."""


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "maxwellian"
    param: tuple = (0.0, 0.0, 0.0)

    _KINDS = {
        "maxwellian": _engine.IC_MAXWELLIAN,
        "point_mass": _engine.IC_POINT_MASS,
        "anisotropic": _engine.IC_ANISOTROPIC,
    }

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown initial condition {self.kind!r}")
        p = tuple(float(x) for x in self.param)
        if len(p) != 3 or not all(math.isfinite(x) for x in p):
            raise ValueError("initial-condition parameter must be three finite numbers")
        if self.kind == "anisotropic" and min(p) <= 0:
            raise ValueError("covariance diagonal must be positive")
        object.__setattr__(self, "param", p)

    @classmethod
    def maxwellian(cls) -> "InitialCondition":
        return cls("maxwellian")

    @classmethod
    def point_mass(cls, v0) -> "InitialCondition":
        return cls("point_mass", tuple(v0))

    @classmethod
    def anisotropic_gaussian(cls, variances) -> "InitialCondition":
        return cls("anisotropic", tuple(variances))

    @property
    def code(self) -> int:
        return self._KINDS[self.kind]

    def moments(self) -> MomentMatrix:
        """Exact second moments of the initial law."""
        if self.kind == "maxwellian":
            return MomentMatrix.identity()
        if self.kind == "anisotropic":
            a, b, c = self.param
            return MomentMatrix(a, 0.0, 0.0, b, 0.0, c)
        return MomentMatrix.from_matrix(np.outer(self.param, self.param))


def default_substep(K: float) -> float:
    return min(0.05, 0.5 / (1.0 + K))


@dataclass(frozen=True)
class SimConfig:
    K: float
    kernel: CollisionKernel
    n_particles: int
    t_end: float
    record_times: tuple
    seed: int = 0
    substep: float | None = None
    initial_condition: InitialCondition = field(default_factory=InitialCondition)
    s_list: tuple = (2.0,)
    snapshot_times: tuple = ()
    n_event_log: int = 0
    chunk_size: int = CHUNK_SIZE

    def __post_init__(self):
        if not (self.K >= 0 and math.isfinite(self.K)):
            raise ValueError("K must be a finite non-negative number")
        if self.n_particles < 1:
            raise ValueError("n_particles must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        tau = default_substep(self.K) if self.substep is None else float(self.substep)
        if not 0 < tau <= self.t_end:
            raise ValueError("substep must lie in (0, t_end]")
        object.__setattr__(self, "substep", tau)
        rt = tuple(float(t) for t in self.record_times)
        if any(b < a for a, b in zip(rt, rt[1:])):
            raise ValueError("record_times must be sorted")
        if rt and (rt[0] < 0 or rt[-1] > self.t_end):
            raise ValueError("record_times must lie in [0, t_end]")
        object.__setattr__(self, "record_times", rt)
        snaps = tuple(float(t) for t in self.snapshot_times)
        if not set(snaps) <= set(rt):
            raise ValueError("snapshot_times must be a subset of record_times")
        object.__setattr__(self, "snapshot_times", snaps)
        object.__setattr__(self, "s_list", tuple(float(s) for s in self.s_list))
        if self.chunk_size < 1 or self.n_event_log < 0:
            raise ValueError("chunk_size must be positive and n_event_log non-negative")

    def stops(self) -> np.ndarray:
        """Distinct stop times: record times plus ``t_end``."""
        return np.unique(np.array(self.record_times + (self.t_end,), dtype=float))


@dataclass
class Ensemble:
    velocities: np.ndarray
    time: float
    accepted_collisions: int = 0
    candidate_collisions: int = 0
    seed: int = 0
    rng_counters: np.ndarray | None = None

    def __post_init__(self):
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.velocities)):
            raise ValueError("non-finite velocity in ensemble")
        if self.accepted_collisions > self.candidate_collisions:
            raise ValueError("more accepted than candidate collisions")

    def __len__(self) -> int:
        return self.velocities.shape[0]


@dataclass(frozen=True)
class MomentEstimate:
    M: MomentMatrix
    M_se: np.ndarray
    Ms: dict
    Ms_se: dict
    time: float
    n: int

    def row(self) -> list[float]:
        se = [self.M_se[i, j] for i, j in _IDX]
        ms = [self.Ms[s] for s in sorted(self.Ms)]
        ms_se = [self.Ms_se[s] for s in sorted(self.Ms_se)]
        return [self.time, *self.M.as_vector(), *se, *ms, *ms_se]


@dataclass
class SimResult:
    config: SimConfig
    trajectory: list
    final: Ensemble
    snapshots: dict
    event_log: np.ndarray | None
    accepted_at: np.ndarray
    candidates_at: np.ndarray

    @property
    def acceptance_ratio(self) -> float:
        c = self.final.candidate_collisions
        return self.final.accepted_collisions / c if c else float("nan")


def shear_drift(v, dt: float, K: float) -> np.ndarray:
    """Exact free flight ``(v1 - K v2 dt, v2, v3)``; works on (..., 3) arrays."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    out = np.array(v, dtype=float, copy=True)
    out[..., 0] -= K * out[..., 1] * dt
    return out


# -- streaming moment accumulation -------------------------------------------


def _features(v: np.ndarray, s_list) -> np.ndarray:
    speed2 = np.einsum("ij,ij->i", v, v)
    cols = [v[:, i] * v[:, j] for i, j in _IDX]
    cols += [speed2 ** (0.5 * s) for s in s_list]
    return np.column_stack(cols)


class _Accumulator:
    """Chan-style merge of chunk means and centred sums of squares."""

    def __init__(self, width: int):
        self.n = 0
        self.mean = np.zeros(width)
        self.m2 = np.zeros(width)

    def add(self, x: np.ndarray) -> None:
        nb = x.shape[0]
        mb = x.mean(axis=0)
        m2b = ((x - mb) ** 2).sum(axis=0)
        # constant columns: keep the exact value instead of the rounded mean
        flat = np.ptp(x, axis=0) == 0
        mb = np.where(flat, x[0], mb)
        m2b = np.where(flat, 0.0, m2b)
        n = self.n + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * (nb / n)
        self.m2 = self.m2 + m2b + delta**2 * (self.n * nb / n)
        self.n = n

    def se(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


def _estimate(acc: _Accumulator, s_list, time: float) -> MomentEstimate:
    mean, se = acc.mean, acc.se()
    M_se = np.zeros((3, 3))
    for k, (i, j) in enumerate(_IDX):
        M_se[i, j] = M_se[j, i] = se[k]
    Ms = {s: float(mean[6 + k]) for k, s in enumerate(s_list)}
    Ms_se = {s: float(se[6 + k]) for k, s in enumerate(s_list)}
    return MomentEstimate(MomentMatrix.from_vector(mean[:6]), M_se, Ms, Ms_se, float(time), acc.n)


def estimate_moments(ensemble: Ensemble | np.ndarray, s_list=(2.0,), time: float | None = None) -> MomentEstimate:
    """Sample second moments, ``E|v|^s`` and their standard errors."""
    v = ensemble.velocities if isinstance(ensemble, Ensemble) else np.asarray(ensemble, dtype=float).reshape(-1, 3)
    if v.shape[0] == 0:
        raise ValueError("empty ensemble")
    if time is None:
        time = ensemble.time if isinstance(ensemble, Ensemble) else 0.0
    s_list = tuple(float(s) for s in s_list)
    acc = _Accumulator(6 + len(s_list))
    acc.add(_features(v, s_list))
    return _estimate(acc, s_list, time)


# -- driver ------------------------------------------------------------------


def run(config: SimConfig, threads: int | None = None) -> SimResult:
    """Evolve the ensemble and return moment estimates at every record time."""
    if threads is not None:
        numba.set_num_threads(threads)
    kern = config.kernel
    stops = config.stops()
    s_list = config.s_list
    rec_pos = {t: int(np.searchsorted(stops, t)) for t in config.record_times}
    accs = {t: _Accumulator(6 + len(s_list)) for t in config.record_times}
    snap_parts = {t: [] for t in config.snapshot_times}
    logs = []
    final_parts, counter_parts = [], []
    acc_at = np.zeros(len(stops), dtype=np.int64)
    cand_at = np.zeros(len(stops), dtype=np.int64)
    ic_param = np.array(config.initial_condition.param, dtype=float)
    mean_g = mean_speed_power(kern.gamma) if kern.gamma > 0 else 0.0
    table_x = np.ascontiguousarray(kern.table_x, dtype=float)
    table_b = np.ascontiguousarray(kern.table_b, dtype=float)

    for first in range(0, config.n_particles, config.chunk_size):
        n = min(config.chunk_size, config.n_particles - first)
        out, acc_n, cand_n, counters, ev_log, errors, diag = _engine.evolve_chunk(
            np.uint64(config.seed), np.uint64(first), n, config.initial_condition.code, ic_param,
            stops, float(config.K), float(kern.gamma), kern.code, table_x, table_b,
            float(kern.b_max), mean_g, float(config.substep), config.n_event_log,
        )
        bad = np.flatnonzero(errors)
        if bad.size:
            i = int(bad[0])
            kind = "majorant violation" if errors[i] == _engine.ERR_MAJORANT else "non-finite velocity"
            raise SimulationError(
                f"{kind} for particle {first + i} at t={diag[i, 0]:.6g} "
                f"(ratio {diag[i, 1]:.6g}); {bad.size} particle(s) affected"
            )
        for t, k in rec_pos.items():
            accs[t].add(_features(out[k], s_list))
            if t in snap_parts:
                snap_parts[t].append(out[k].copy())
        final_parts.append(out[-1].copy())
        counter_parts.append(counters)
        if config.n_event_log:
            logs.append(ev_log)
        acc_at += acc_n.sum(axis=1)
        cand_at += cand_n.sum(axis=1)
        log.debug("chunk %d..%d done", first, first + n)

    trajectory = [_estimate(accs[t], s_list, t) for t in config.record_times]
    final = Ensemble(np.concatenate(final_parts), float(config.t_end), int(acc_at[-1]),
                     int(cand_at[-1]), config.seed, np.concatenate(counter_parts))
    snapshots = {t: np.concatenate(p) for t, p in snap_parts.items()}
    event_log = np.concatenate(logs) if logs else None
    idx = [rec_pos[t] for t in config.record_times]
    return SimResult(config, trajectory, final, snapshots, event_log, acc_at[idx], cand_at[idx])


# -- diagnostics -------------------------------------------------------------


def _series(trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Values and standard errors of (M11..M33, Ms[2]) along a trajectory."""
    vals, ses = [], []
    for e in trajectory:
        if isinstance(e, MomentEstimate):
            m2 = e.Ms.get(2.0, e.M.trace)
            m2_se = e.Ms_se.get(2.0, float(np.sqrt(np.sum(np.diag(e.M_se) ** 2))))
            vals.append([*e.M.as_vector(), m2])
            ses.append([*(e.M_se[i, j] for i, j in _IDX), m2_se])
        else:
            vals.append(e[0])
            ses.append(e[1])
    return np.asarray(vals, dtype=float), np.asarray(ses, dtype=float)


def stationarity_test(trajectory, window: int, tol_sigma: float = 2.0) -> str:
    """Compare block means over the last two windows of record times.

    ``trajectory`` holds :class:`MomentEstimate` entries or ``(values, ses)``
    pairs. The block-mean error is bounded by the mean per-entry error
    (entries share particles), and the two blocks are combined in
    quadrature.
    """
    if window < 1 or tol_sigma <= 0:
        raise ValueError("window and tol_sigma must be positive")
    if len(trajectory) < 2 * window:
        raise ValueError(f"need at least {2 * window} entries, got {len(trajectory)}")
    vals, ses = _series(trajectory)
    a, b = slice(-2 * window, -window), slice(-window, None)
    diff = np.abs(vals[b].mean(axis=0) - vals[a].mean(axis=0))
    pooled = np.hypot(ses[a].mean(axis=0), ses[b].mean(axis=0))
    z = np.where(pooled > 0, diff / np.where(pooled > 0, pooled, 1.0), np.where(diff > 0, np.inf, 0.0))
    if np.all(z < tol_sigma):
        return "stationary"
    if np.any(z > 3 * tol_sigma):
        return "drifting"
    return "inconclusive"


def selfsim_diagnostic(early: Ensemble, late: Ensemble, mu: float) -> float:
    """Two-sample KS statistic between rescaled speeds ``|v| exp(-mu t / 2)``."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    a = np.linalg.norm(early.velocities, axis=1) * math.exp(-0.5 * mu * early.time)
    b = np.linalg.norm(late.velocities, axis=1) * math.exp(-0.5 * mu * late.time)
    return float(stats.ks_2samp(a, b).statistic)


def interarrival_times(event_log: np.ndarray, n_events: int | None = None,
                       per_particle: int | None = None) -> np.ndarray:
    """Per-particle gaps between logged collision times, first gap measured from t=0.

    Rows are particles, unused slots are negative. Gaps near the end of the
    run are censored (a long gap is less likely to finish before ``t_end``),
    so ``per_particle`` keeps only the first gaps of each particle; pick it
    well below the expected event count. Gaps are taken particle by particle
    until ``n_events`` have been collected.
    """
    gaps = []
    total = 0
    for row in event_log:
        times = row[row >= 0]
        if times.size == 0:
            continue
        g = np.diff(np.concatenate(([0.0], times)))[:per_particle]
        gaps.append(g)
        total += g.size
        if n_events is not None and total >= n_events:
            break
    out = np.concatenate(gaps) if gaps else np.empty(0)
    return out[:n_events] if n_events is not None else out


def exponential_gof(samples: np.ndarray, rate: float, n_bins: int = 50) -> tuple[float, float]:
    """Pearson chi-square against Exp(rate) on equiprobable bins; returns (statistic, p-value)."""
    samples = np.asarray(samples, dtype=float)
    edges = stats.expon.ppf(np.linspace(0, 1, n_bins + 1), scale=1.0 / rate)
    counts, _ = np.histogram(samples, bins=edges)
    expected = np.full(n_bins, samples.size / n_bins)
    res = stats.chisquare(counts, expected)
    return float(res.statistic), float(res.pvalue)
