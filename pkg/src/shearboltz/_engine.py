"""numba kernels for the tagged-particle engine.

Each particle is advanced independently from its own Philox stream, so the
output for particle ``i`` depends only on ``(seed, i)`` and the physical
parameters, never on the thread count or chunking.

Collision events are generated by windowed thinning. A window opened at
time ``t0`` with speed ``|v(t0)|`` lasts at most ``tau``; during it the
drifted speed satisfies ``|v(t)| <= R = |v(t0)| (1 + K tau)``. With
``(R + |v*|)**g <= R**g + |v*|**g`` the candidate intensity
``4 pi b_max M(v*) (R**g + |v*|**g)`` dominates the true one. Candidates draw
``v*`` from the matching two-component mixture (Maxwellian / Maxwellian
tilted by ``|v*|**g``) and ``omega`` uniformly, and are accepted with
probability ``b(n.w) |v - v*|**g / (b_max (R**g + |v*|**g))``. At ``g = 0`` the
envelope is exactly ``4 pi b_max``.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .rng import new_state, next_normal_pair, next_open_uniform, next_uniform

# the bundled TBB is too old for numba; skip straight to the other layers
nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

IC_MAXWELLIAN, IC_POINT_MASS, IC_ANISOTROPIC = 0, 1, 2

ERR_NONE, ERR_MAJORANT, ERR_NONFINITE = 0, 1, 2

_ENVELOPE_SLACK = 1e-12


@nb.njit(cache=True, inline="always")
def _b_eval(code, x, table_x, table_b):
    if code == 0:
        return 1.0
    if code == 1:
        return x * x
    return np.interp(x, table_x, table_b)


@nb.njit(cache=True)
def _gamma_variate(st, shape):
    # Marsaglia-Tsang, shape >= 1
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x, _ = next_normal_pair(st)
        w = 1.0 + c * x
        if w <= 0.0:
            continue
        w = w * w * w
        u = next_open_uniform(st)
        if math.log(u) < 0.5 * x * x + d - d * w + d * math.log(w):
            return d * w


@nb.njit(cache=True, inline="always")
def _unit_vector(st):
    z = 2.0 * next_uniform(st) - 1.0
    phi = 2.0 * math.pi * next_uniform(st)
    s = math.sqrt(max(0.0, 1.0 - z * z))
    return s * math.cos(phi), s * math.sin(phi), z


@nb.njit(cache=True)
def _initial_velocity(st, ic_kind, ic_param, v):
    if ic_kind == IC_POINT_MASS:
        v[0] = ic_param[0]
        v[1] = ic_param[1]
        v[2] = ic_param[2]
        return
    a, b = next_normal_pair(st)
    c, _ = next_normal_pair(st)
    if ic_kind == IC_ANISOTROPIC:
        v[0] = a * math.sqrt(ic_param[0])
        v[1] = b * math.sqrt(ic_param[1])
        v[2] = c * math.sqrt(ic_param[2])
    else:
        v[0] = a
        v[1] = b
        v[2] = c


@nb.njit(cache=True)
def _advance(st, v, t, t_stop, K, gamma, b_code, table_x, table_b, b_max, mean_g, tau,
             counts, log_row, diag):
    """Advance one particle from ``t`` to ``t_stop``; returns an error code.

    ``counts`` = [accepted, candidates, logged]; ``diag`` receives the time and
    envelope ratio of the first failure.
    """
    four_pi_bmax = 4.0 * math.pi * b_max
    tilted_shape = 1.5 + 0.5 * gamma
    while t < t_stop:
        speed = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
        r_win = speed * (1.0 + K * tau)
        if gamma > 0.0:
            rg = r_win ** gamma
            lam = four_pi_bmax * (rg + mean_g)
        else:
            rg = 1.0
            lam = four_pi_bmax
        t_win = min(t + tau, t_stop)
        while True:
            dt = -math.log(next_open_uniform(st)) / lam
            if t + dt >= t_win:
                v[0] -= K * v[1] * (t_win - t)
                t = t_win
                break
            v[0] -= K * v[1] * dt
            t += dt
            counts[1] += 1
            if gamma > 0.0:
                if next_uniform(st) * (rg + mean_g) < rg:
                    a, b = next_normal_pair(st)
                    c, _ = next_normal_pair(st)
                    vs0, vs1, vs2 = a, b, c
                else:
                    rad = math.sqrt(2.0 * _gamma_variate(st, tilted_shape))
                    e0, e1, e2 = _unit_vector(st)
                    vs0, vs1, vs2 = rad * e0, rad * e1, rad * e2
            else:
                a, b = next_normal_pair(st)
                c, _ = next_normal_pair(st)
                vs0, vs1, vs2 = a, b, c
            w0, w1, w2 = _unit_vector(st)
            r0 = v[0] - vs0
            r1 = v[1] - vs1
            r2 = v[2] - vs2
            rn = math.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
            u_acc = next_uniform(st)
            if rn == 0.0:
                continue
            proj = r0 * w0 + r1 * w1 + r2 * w2
            bval = _b_eval(b_code, proj / rn, table_x, table_b)
            if gamma > 0.0:
                vs_norm = math.sqrt(vs0 * vs0 + vs1 * vs1 + vs2 * vs2)
                ratio = bval * rn ** gamma / (b_max * (rg + vs_norm ** gamma))
                now = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
                if now > r_win * (1.0 + _ENVELOPE_SLACK):
                    diag[0] = t
                    diag[1] = now / r_win
                    return ERR_MAJORANT
            else:
                ratio = bval / b_max
            if ratio > 1.0 + _ENVELOPE_SLACK:
                diag[0] = t
                diag[1] = ratio
                return ERR_MAJORANT
            if u_acc < ratio:
                v[0] -= proj * w0
                v[1] -= proj * w1
                v[2] -= proj * w2
                counts[0] += 1
                if counts[2] < log_row.shape[0]:
                    log_row[counts[2]] = t
                    counts[2] += 1
                if not (math.isfinite(v[0]) and math.isfinite(v[1]) and math.isfinite(v[2])):
                    diag[0] = t
                    return ERR_NONFINITE
                break
    return ERR_NONE


@nb.njit(cache=True, parallel=True)
def evolve_chunk(seed, first_index, n, ic_kind, ic_param, stops, K, gamma, b_code,
                 table_x, table_b, b_max, mean_g, tau, n_log):
    """Evolve particles ``first_index .. first_index+n-1`` through all ``stops``.

    Returns (velocities at stops [n_stops, n, 3], cumulative accepted and
    candidate counts at stops [n_stops, n], final stream counters,
    event-time log [n, n_log], error codes, diagnostics).
    """
    n_stops = stops.shape[0]
    out = np.empty((n_stops, n, 3))
    accepted = np.zeros((n_stops, n), dtype=np.int64)
    candidates = np.zeros((n_stops, n), dtype=np.int64)
    counters = np.zeros(n, dtype=np.uint64)
    log = np.full((n, n_log), -1.0)
    errors = np.zeros(n, dtype=np.int8)
    diag = np.zeros((n, 2))
    for i in nb.prange(n):
        st = new_state(seed, first_index + i)
        v = np.empty(3)
        _initial_velocity(st, ic_kind, ic_param, v)
        counts = np.zeros(3, dtype=np.int64)
        t = 0.0
        for k in range(n_stops):
            if errors[i] == ERR_NONE:
                err = _advance(st, v, t, stops[k], K, gamma, b_code, table_x, table_b,
                               b_max, mean_g, tau, counts, log[i], diag[i])
                errors[i] = err
                t = stops[k]
            out[k, i, 0] = v[0]
            out[k, i, 1] = v[1]
            out[k, i, 2] = v[2]
            accepted[k, i] = counts[0]
            candidates[k, i] = counts[1]
        counters[i] = st[2]
    return out, accepted, candidates, counters, log, errors, diag
