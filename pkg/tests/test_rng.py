import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from stochpoisson.rng import (
    UINT64_MAX,
    brownian_increments,
    derive_seed,
    normals,
    splitmix64_at,
    uniforms,
)

MASK = UINT64_MAX


def reference_splitmix64(state, count):
    """Sequential splitmix64 written with Python integers."""
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def reference_normal(state, j):
    k = j // 2
    a, b = reference_splitmix64(state, 2 * k + 2)[2 * k:]
    u1 = ((a >> 11) + 1) * 2.0 ** -53
    u2 = (b >> 11) * 2.0 ** -53
    rho = math.sqrt(-2.0 * math.log(u1))
    return rho * (math.sin if j % 2 else math.cos)(2.0 * math.pi * u2)


def test_known_splitmix64_outputs():
    assert [int(v) for v in splitmix64_at(0, np.arange(3))] == [
        0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    assert [int(v) for v in splitmix64_at(1234567, np.arange(5))] == [
        6457827717110365317, 3203168211198807973, 9817491932198370423,
        4593380528125082431, 16408922859458223821]


def test_normals_match_reference():
    for seed in (0, 42, MASK):
        got = normals(seed, np.arange(7))
        assert got.tolist() == [reference_normal(seed, j) for j in range(7)]


def test_derived_seeds_and_uniform_range():
    assert int(derive_seed(42, 3)) == reference_splitmix64(42, 4)[3]
    u = uniforms(7, np.arange(10000))
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01


def test_increments_order_independent():
    seeds = derive_seed(9, np.arange(6))
    full = brownian_increments(seeds, 5, 3, 1e-2)
    parts = np.concatenate([brownian_increments(seeds[i:i + 1], 5, 3, 1e-2)
                            for i in (3, 0, 5, 1, 4, 2)])
    assert np.array_equal(full[[3, 0, 5, 1, 4, 2]], parts)
    assert np.array_equal(full[2], 0.1 * normals(seeds[2], np.arange(15, 18)))


def test_normal_moments():
    z = normals(2024, np.arange(200000))
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.01


@settings(max_examples=50, deadline=None)
@given(st.integers(0, MASK), st.integers(0, 10 ** 4))
def test_stream_is_pure(seed, j):
    assert float(normals(seed, j)) == float(normals(seed, np.array([j, j + 1]))[0])
    assert float(normals(seed, j)) == reference_normal(seed, j)
