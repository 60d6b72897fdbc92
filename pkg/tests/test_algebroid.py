import numpy as np
import pytest

from stochpoisson.algebroid import (
    LieAlgebroid,
    bracket_sections,
    check_compatibility,
    fiber_linear_function,
    hamiltonian_field_of_section,
    lie_algebra_algebroid,
    tangent_algebroid,
)
from stochpoisson.connection import so3
from stochpoisson.errors import ConfigurationError, StructureError
from stochpoisson.geometry import Polynomial
from stochpoisson.poisson import bracket, from_algebroid, hamiltonian_field


def random_algebroid(rng, n=2, r=3):
    """Polynomial anchor and antisymmetric structure functions (not compatible)."""
    exps = [(0, 0), (1, 0), (0, 1), (1, 1)]
    anchor = Polynomial(n, exps, rng.standard_normal((4, n, r)))
    c = rng.standard_normal((4, r, r, r))
    return LieAlgebroid(n, r, anchor, Polynomial(n, exps, c - np.swapaxes(c, -1, -2)))


def test_so3_over_point_is_compatible(rng):
    for n in (0, 2):
        alg = lie_algebra_algebroid(so3().constants, n=n)
        rep = check_compatibility(alg, rng.standard_normal((5, n)))
        assert rep.max() <= 1e-12


def test_tangent_algebroid_residuals_exactly_zero(rng):
    rep = check_compatibility(tangent_algebroid(3), rng.standard_normal((6, 3)))
    assert rep.max() == 0.0


def test_sign_flipped_so3_pair_is_still_a_lie_algebra(rng):
    # [e1, e2] = -e3 with the other brackets kept is so(2,1)
    c = so3().constants.copy()
    c[2, 0, 1], c[2, 1, 0] = -c[2, 0, 1], -c[2, 1, 0]
    rep = check_compatibility(LieAlgebroid(1, 3, np.zeros((1, 3)), c), rng.standard_normal((4, 1)))
    assert rep.max() == 0.0


def test_corrupted_so3_fails_jacobi(rng):
    # [e1, e2] = e3 + e1 breaks the cyclic identity by exactly 1
    c = so3().constants.copy()
    c[0, 0, 1], c[0, 1, 0] = 1.0, -1.0
    rep = check_compatibility(LieAlgebroid(1, 3, np.zeros((1, 3)), c), rng.standard_normal((4, 1)))
    assert np.max(rep.jacobi) >= 1.0


def test_structure_must_be_antisymmetric():
    c = np.zeros((2, 2, 2))
    c[0, 0, 1] = 1.0
    with pytest.raises(StructureError):
        LieAlgebroid(1, 2, np.zeros((1, 2)), c)


def test_fiber_linear_function_examples():
    alg = lie_algebra_algebroid(so3().constants, n=2)
    f = fiber_linear_function(alg, [1.0, 0.0, 0.0])
    assert f([9.0, -3.0, 4.0, 5.0, 6.0]) == 4.0
    zero = fiber_linear_function(alg, np.zeros(3))
    assert zero([1.0, 2.0, 3.0, 4.0, 5.0]) == 0.0
    line = LieAlgebroid(1, 1, np.ones((1, 1)), np.zeros((1, 1, 1)))
    a = Polynomial.from_nested(1, [{"1": 1.0}])
    assert fiber_linear_function(line, a)([2.0, 3.0]) == 6.0


def test_fiber_linear_function_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        fiber_linear_function(tangent_algebroid(2), [1.0, 2.0, 3.0])


def test_hamiltonian_field_of_section_examples():
    flat = tangent_algebroid(2)
    v = hamiltonian_field_of_section(flat, [0.5, -2.0], [1.0, 2.0, 3.0, 4.0])
    assert np.allclose(v, [0.5, -2.0, 0.0, 0.0])
    point = lie_algebra_algebroid(so3().constants)
    v = hamiltonian_field_of_section(point, [1.0, 0.0, 0.0], [1.0, 2.0, 3.0])
    assert np.allclose(v, [0.0, -3.0, 2.0], atol=1e-15)


def test_hamiltonian_field_matches_poisson_oracle(rng):
    alg = random_algebroid(rng)
    sec = Polynomial(2, [(0, 0), (1, 0), (0, 2)], rng.standard_normal((3, 3)))
    z = rng.standard_normal((50, 5))
    closed = hamiltonian_field_of_section(alg, sec, z)
    oracle = hamiltonian_field(from_algebroid(alg), fiber_linear_function(alg, sec), z)
    assert np.max(np.abs(closed - oracle) / (1 + np.abs(oracle))) < 1e-6


def test_fiber_linear_map_is_linear(rng):
    alg = random_algebroid(rng)
    a = Polynomial(2, [(1, 0), (0, 1)], rng.standard_normal((2, 3)))
    b = Polynomial(2, [(0, 0), (2, 0)], rng.standard_normal((2, 3)))
    total = Polynomial(2, np.vstack([a.exponents, b.exponents]), np.vstack([a.coeffs, b.coeffs]))
    z = rng.standard_normal((20, 5))
    lhs = fiber_linear_function(alg, total)(z)
    rhs = fiber_linear_function(alg, a)(z) + fiber_linear_function(alg, b)(z)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_bracket_homomorphism_constant_sections(rng):
    alg = lie_algebra_algebroid(so3().constants, n=1)
    P = from_algebroid(alg)
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    ab = bracket_sections(alg, a, b)
    z = rng.standard_normal((20, 4))
    lhs = fiber_linear_function(alg, ab.components)(z)
    rhs = bracket(P, fiber_linear_function(alg, a), fiber_linear_function(alg, b), z)
    assert np.max(np.abs(lhs - rhs) / (1 + np.abs(rhs))) < 1e-8


def test_bracket_of_tangent_sections_is_vector_field_bracket():
    alg = tangent_algebroid(2)
    X = Polynomial.from_nested(2, [{"0,1": 1.0}, 0.0])     # x2 d1
    Y = Polynomial.from_nested(2, [0.0, {"1,0": 1.0}])     # x1 d2
    br = bracket_sections(alg, X, Y)
    # [x2 d1, x1 d2] = x2 d2 - x1 d1
    assert np.allclose(br([3.0, 5.0]), [-3.0, 5.0], atol=1e-8)
