"""Counter-based random streams (Philox4x64-10) shared by Python and numba code.

Every tagged particle owns an independent stream keyed by ``(seed, index)``.
The bit layout is identical to :class:`numpy.random.Philox` with
``key=[seed, index]`` and a zero initial counter, so any engine draw can be
replayed from Python with :func:`particle_generator`.

Stream state inside the engine is a small ``uint64`` array::

    [key0, key1, counter, buffer_pos, buf0, buf1, buf2, buf3]
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

__all__ = [
    "STATE_SIZE",
    "new_state",
    "next_uint64",
    "next_uniform",
    "next_open_uniform",
    "next_normal_pair",
    "philox4x64",
    "particle_generator",
]

STATE_SIZE = 8

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@nb.njit(cache=True, inline="always")
def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _MASK32) + (hl & _MASK32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    lo = a * b
    return hi, lo


@nb.njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """One Philox4x64-10 block for counter (c0..c3) and key (k0, k1)."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(cache=True)
def new_state(seed, index):
    st = np.zeros(STATE_SIZE, dtype=np.uint64)
    st[0] = np.uint64(seed)
    st[1] = np.uint64(index)
    st[3] = np.uint64(4)
    return st


@nb.njit(cache=True)
def next_uint64(st):
    pos = st[3]
    if pos >= np.uint64(4):
        # numpy's Philox bumps the counter before generating a block
        st[2] = st[2] + _ONE
        o0, o1, o2, o3 = philox4x64(st[2], np.uint64(0), np.uint64(0), np.uint64(0), st[0], st[1])
        st[4] = o0
        st[5] = o1
        st[6] = o2
        st[7] = o3
        pos = np.uint64(0)
    out = st[4 + np.int64(pos)]
    st[3] = pos + _ONE
    return out


@nb.njit(cache=True)
def next_uniform(st):
    """Uniform double on [0, 1) with 53 random bits (numpy's convention)."""
    return np.float64(next_uint64(st) >> _S11) * _INV53


@nb.njit(cache=True)
def next_open_uniform(st):
    """Uniform double on (0, 1); safe for ``log``."""
    return (np.float64(next_uint64(st) >> _S11) + 0.5) * _INV53


@nb.njit(cache=True)
def next_normal_pair(st):
    u1 = next_open_uniform(st)
    u2 = next_uniform(st)
    r = math.sqrt(-2.0 * math.log(u1))
    phi = 2.0 * math.pi * u2
    return r * math.cos(phi), r * math.sin(phi)


def particle_generator(seed: int, index: int) -> np.random.Generator:
    """numpy Generator drawing the same raw bits as the engine stream of one particle."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))
