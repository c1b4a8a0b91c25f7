"""Philox4x32-10 counter-based generator, vectorised over counters.

Every Brownian increment is a pure function of ``(seed, path_index, step)``:
the 64-bit seed is the Philox key, and the counter block is
``(step // 2, path_lo, path_hi, 0)``. Each Philox call yields four 32-bit
words; even steps use words 0-1, odd steps words 2-3, each pair forming a
53-bit uniform in (0, 1) that is mapped to a standard normal by the inverse
CDF. Integer arithmetic only up to the final ``ndtri``, so outputs are
bitwise reproducible.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = ["philox4x32", "uniforms", "standard_normals"]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
ROUNDS = 10


def philox4x32(c0, c1, c2, c3, k0: int, k1: int, rounds: int = ROUNDS):
    """Apply Philox4x32 to broadcastable counter words; returns four uint32 arrays."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in (c0, c1, c2, c3))
    k0 &= 0xFFFFFFFF
    k1 &= 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK32,
        )
    return tuple(c.astype(np.uint32) for c in (c0, c1, c2, c3))


def _to_unit(hi, lo):
    # 27 + 26 bits, centred in the cell so 0 and 1 are never produced
    a = (hi.astype(np.uint64) >> np.uint64(5)).astype(np.float64)
    b = (lo.astype(np.uint64) >> np.uint64(6)).astype(np.float64)
    return (a * 67108864.0 + b + 0.5) * (1.0 / 9007199254740992.0)


def uniforms(seed: int, path_indices, n_steps: int) -> np.ndarray:
    """Uniform draws, time-major: shape ``(n_steps, len(path_indices))``."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    paths = np.asarray(path_indices, dtype=np.uint64).reshape(1, -1)
    half = np.arange((n_steps + 1) // 2, dtype=np.uint64).reshape(-1, 1)
    w0, w1, w2, w3 = philox4x32(half, paths & _MASK32, paths >> _SHIFT32, 0, seed & 0xFFFFFFFF, seed >> 32)
    out = np.empty((2 * half.shape[0], paths.shape[1]))
    out[0::2] = _to_unit(w0, w1)
    out[1::2] = _to_unit(w2, w3)
    return out[:n_steps]


def standard_normals(seed: int, path_indices, n_steps: int) -> np.ndarray:
    """Standard normal draws, time-major like :func:`uniforms`."""
    return ndtri(uniforms(seed, path_indices, n_steps))
