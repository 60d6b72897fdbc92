import numpy as np
import pytest

from stochpoisson.connection import (
    LieAlgebraSpec,
    PrincipalConnection,
    abelian,
    affine_connection_package,
    algebra_from_name,
    covariant_derivative,
    curvature,
    ga,
    gl,
    gl_refinement_data,
    jacobi_defect,
    section_bracket,
    so3,
)
from stochpoisson.errors import ConfigurationError, StructureError
from stochpoisson.geometry import Polynomial


def so3_connection(n=3):
    A = Polynomial.from_nested(n, [[{"1,0,0": 1.0, "0,1,1": 0.5}, {"0,2,0": 0.3}, 0.0],
                                   [{"0,0,1": -1.0}, {"1,1,0": 0.2}, 0.7],
                                   [0.0, {"1,0,0": 2.0}, {"0,0,2": 0.1}]])
    return PrincipalConnection(so3(), n, A)


def test_gl_relations_pinned():
    n = 2
    c = gl(n).constants

    def e(i, j):
        v = np.zeros(n * n)
        v[i * n + j] = 1.0
        return v

    alg = gl(n)
    # [e^0_1, e^1_0] = e^1_1 - e^0_0
    assert np.allclose(alg.bracket(e(0, 1), e(1, 0)), e(1, 1) - e(0, 0))
    # [e^0_0, e^0_1] = -e^0_1 ; [e^1_0, e^0_0] = -e^1_0 ... via the delta formula
    for i, j, l, k in np.ndindex(n, n, n, n):
        expected = (i == k) * e(l, j) - (l == j) * e(i, k)
        assert np.allclose(alg.bracket(e(i, j), e(l, k)), expected)
    assert np.abs(jacobi_defect(c)).max() == 0.0


def test_ga_translation_relations():
    n = 2
    alg = ga(n)
    basis = np.eye(n * n + n)
    for i, j, k in np.ndindex(n, n, n):
        expected = (i == k) * basis[n * n + j]
        assert np.allclose(alg.bracket(basis[i * n + j], basis[n * n + k]), expected)
    assert np.allclose(alg.bracket(basis[n * n], basis[n * n + 1]), 0.0)
    assert np.abs(jacobi_defect(alg.constants)).max() <= 1e-12


def test_lie_algebra_validation():
    c = np.zeros((2, 2, 2))
    c[0, 0, 1] = 1.0
    with pytest.raises(StructureError):
        LieAlgebraSpec(c)
    with pytest.raises(ConfigurationError):
        algebra_from_name("so5")
    assert algebra_from_name("ga:2").p == 6


def test_covariant_derivative_examples(rng):
    n = 2
    x = rng.standard_normal(n)
    xi = Polynomial.from_nested(n, [{"1,0": 1.0}, {"0,2": 1.0}, 0.0])
    flat = PrincipalConnection(so3(), n, np.zeros((3, n)))
    assert np.allclose(covariant_derivative(flat, [0.0, 1.0], xi, x), [0.0, 2 * x[1], 0.0])
    ab = PrincipalConnection(abelian(2), n, Polynomial.from_nested(n, [[{"1,0": 1.0}, 0.0],
                                                                      [0.0, 2.0]]))
    assert np.allclose(covariant_derivative(ab, [1.0, 1.0], [3.0, 4.0], x), 0.0)
    A = np.zeros((3, n))
    A[0, 0] = 1.0
    conn = PrincipalConnection(so3(), n, A)
    assert np.allclose(covariant_derivative(conn, [1.0, 0.0], [0.0, 1.0, 0.0], x), [0, 0, 1])


def test_curvature_examples(rng):
    x = rng.standard_normal(2)
    const = PrincipalConnection(abelian(2), 2, np.ones((2, 2)))
    assert np.all(curvature(const, x) == 0.0)
    ab = PrincipalConnection(abelian(1), 2, Polynomial.from_nested(2, [[0.0, {"1,0": 1.0}]]))
    B = curvature(ab, x)
    assert B[0, 0, 1] == 1.0 and B[0, 1, 0] == -1.0
    zero = PrincipalConnection(so3(), 2, np.zeros((3, 2)))
    assert np.all(curvature(zero, x) == 0.0)
    assert curvature(PrincipalConnection(so3(), 1, np.ones((3, 1))), [0.3]).shape == (3, 1, 1)


def test_curvature_antisymmetric_and_derivative(rng):
    conn = so3_connection()
    x = rng.standard_normal((10, 3))
    B = curvature(conn, x)
    assert np.all(B == -np.swapaxes(B, -1, -2))
    field = conn.curvature_field()
    exact = field.derivative()(x)
    from stochpoisson.geometry import central_difference

    fd = central_difference(field._evaluate, x, 3)
    assert np.max(np.abs(exact - fd)) < 1e-7


def test_section_bracket_basis_pairs_closed_form(rng):
    n, c = 3, so3().constants
    A = rng.standard_normal((3, n))
    conn = PrincipalConnection(so3(), n, A)
    B = np.einsum("abc,bi,cj->aij", c, A, A)
    eye_n, eye_p = np.eye(n), np.eye(3)
    x = rng.standard_normal(n)
    for i, j, a, b in [(0, 1, 0, 1), (1, 2, 2, 0), (0, 2, 1, 1)]:
        base, alg = section_bracket(conn, (eye_n[i], eye_p[a]), (eye_n[j], eye_p[b]), x)
        closed = (np.einsum("dc,c->d", c[:, :, b], A[:, i]) - np.einsum("dc,c->d", c[:, :, a], A[:, j])
                  - B[:, i, j] + c[:, a, b])
        assert np.allclose(base, 0.0)
        assert np.allclose(alg, closed, atol=1e-12)


def test_section_bracket_properties(rng):
    conn = so3_connection()
    x = rng.standard_normal(3)
    X1 = Polynomial.from_nested(3, [{"0,1,0": 1.0}, 0.0, {"1,0,0": 1.0}])
    X2 = Polynomial.from_nested(3, [0.0, {"0,0,1": 2.0}, 1.0])
    s1 = Polynomial.from_nested(3, [{"1,0,0": 1.0}, 0.5, 0.0])
    s2 = Polynomial.from_nested(3, [0.0, {"0,1,0": 1.0}, {"0,0,1": -1.0}])
    b12, a12 = section_bracket(conn, (X1, s1), (X2, s2), x)
    b21, a21 = section_bracket(conn, (X2, s2), (X1, s1), x)
    assert np.allclose(b12, -b21, atol=1e-10) and np.allclose(a12, -a21, atol=1e-10)
    zero = np.zeros(3)
    _, alg = section_bracket(conn, (zero, s1), (zero, s2), x)
    assert np.allclose(alg, so3().bracket(s1(x), s2(x)), atol=1e-12)
    flat = PrincipalConnection(so3(), 3, np.zeros((3, 3)))
    base, alg = section_bracket(flat, (np.eye(3)[0], zero), (np.eye(3)[1], zero), x)
    assert np.allclose(base, 0.0) and np.allclose(alg, 0.0)


def test_flat_connection_is_trivial(rng):
    conn = PrincipalConnection(so3(), 3, np.zeros((3, 3)))
    x = rng.standard_normal(3)
    xi = Polynomial.from_nested(3, [{"1,1,0": 1.0}, {"0,0,1": 1.0}, 2.0])
    X = np.array([0.3, -1.0, 2.0])
    plain = np.einsum("i,ai->a", X, xi.derivative()(x))
    assert np.allclose(covariant_derivative(conn, X, xi, x), plain, atol=1e-12)
    assert np.all(curvature(conn, x) == 0.0)


def test_affine_package_examples(rng):
    zero = affine_connection_package(np.zeros((2, 2, 2)), np.zeros((2, 2)), 2)
    x = rng.standard_normal(2)
    assert np.all(zero.gl_covariant_derivative(x) == 0)
    assert np.all(zero.translation_derivative(x) == 0)
    Bg, Bt = zero.curvature_split(x)
    assert np.all(Bg == 0) and np.all(Bt == 0)
    c = 0.7
    one = affine_connection_package(np.full((1, 1, 1), c), np.zeros((1, 1)), 1)
    # nabla_r e_k = A^i_{kr} e_i  ->  c e_1, stored after the single gl slot
    assert np.allclose(one.translation_derivative([0.2])[0, 0], [0.0, c])


def test_affine_curvature_abelian_data_is_antisymmetrised_derivative(rng):
    T = Polynomial.from_nested(2, [[{"0,1": 1.0}, {"2,0": 0.5}], [{"1,1": -1.0}, 0.0]])
    aff = affine_connection_package(np.zeros((2, 2, 2)), T, 2)
    x = rng.standard_normal(2)
    _, Bt = aff.curvature_split(x)
    dT = T.derivative()(x)  # [h, r, k]
    expected = np.swapaxes(dT, -1, -2) - dT
    assert np.allclose(Bt, expected, atol=1e-12)


def test_gl_refinement_data_derives_or_takes_curvature():
    data = gl_refinement_data(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), 2)
    assert data.derived_curvature
    assert np.all(data.curv_xx(np.ones(4)) == 0)
    with pytest.raises(ConfigurationError):
        gl_refinement_data(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), 2, curv_xx=np.zeros((2,) * 4))
    given = gl_refinement_data(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), 2,
                               curv_xx=np.ones((2,) * 4), curv_qq=np.zeros((2,) * 4),
                               curv_xq=np.zeros((2,) * 4))
    assert not given.derived_curvature
