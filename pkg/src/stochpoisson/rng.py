"""Counter-based Gaussian stream built on splitmix64.

Every value is a pure function of ``(seed, counter)``, so paths can be
generated in any order, in any batch composition, on any platform, and
reproduce bit for bit.

* ``splitmix64_at(state, c)``: output number ``c`` (0-based) of the
  splitmix64 generator started at ``state``, i.e. ``mix(state + (c + 1) * GOLDEN)``.
* ``derive_seed(seed, i) = splitmix64_at(seed, i)``: per-path seed.
* Uniforms take the top 53 bits.  Normal ``j`` of a stream comes from the
  uniform pair ``(2k, 2k + 1)`` with ``k = j // 2`` by Box-Muller:
  ``u1 = (bits + 1) / 2^53`` in ``(0, 1]``, ``u2 = bits / 2^53`` in ``[0, 1)``,
  ``rho = sqrt(-2 log u1)``; even ``j`` takes ``rho cos(2 pi u2)``, odd ``j``
  ``rho sin(2 pi u2)``.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)
_TWO53 = 2.0 ** -53

UINT64_MAX = 2 ** 64 - 1


def _u64(x) -> np.ndarray:
    if isinstance(x, np.ndarray) and x.dtype == np.uint64:
        return x
    arr = np.asarray(x, dtype=object)
    return np.vectorize(lambda v: np.uint64(int(v) & UINT64_MAX), otypes=[np.uint64])(arr) \
        if arr.shape else np.uint64(int(arr) & UINT64_MAX)


def mix(z) -> np.ndarray:
    """The splitmix64 finaliser (wrapping 64-bit arithmetic)."""
    z = np.array(z, dtype=np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def splitmix64_at(state, counter) -> np.ndarray:
    state = np.asarray(_u64(state), dtype=np.uint64)
    counter = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix(state + (counter + np.uint64(1)) * GOLDEN)


def derive_seed(seed, index) -> np.ndarray:
    """Seed of path ``index`` in an ensemble seeded with ``seed``."""
    return splitmix64_at(seed, index)


def uniforms(state, counter) -> np.ndarray:
    """53-bit uniforms in ``[0, 1)``."""
    return (splitmix64_at(state, counter) >> _S11).astype(np.float64) * _TWO53


def normals(state, index) -> np.ndarray:
    """Standard normal number ``index`` of the stream ``state`` (broadcasting)."""
    state = np.asarray(_u64(state), dtype=np.uint64)
    index = np.asarray(index, dtype=np.uint64)
    pair = (index >> np.uint64(1)) * np.uint64(2)
    b1 = splitmix64_at(state, pair) >> _S11
    b2 = splitmix64_at(state, pair + np.uint64(1)) >> _S11
    u1 = (b1.astype(np.float64) + 1.0) * _TWO53
    u2 = b2.astype(np.float64) * _TWO53
    rho = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    odd = (index & np.uint64(1)).astype(bool)
    return np.where(odd, rho * np.sin(angle), rho * np.cos(angle))


def brownian_increments(path_seeds, step, r, dt) -> np.ndarray:
    """``(N, r)`` increments for one step: normals ``step*r .. step*r + r - 1``, scaled."""
    seeds = np.asarray(path_seeds, dtype=np.uint64).reshape(-1, 1)
    index = np.uint64(step) * np.uint64(r) + np.arange(r, dtype=np.uint64)[None, :]
    return np.sqrt(dt) * normals(seeds, index)
