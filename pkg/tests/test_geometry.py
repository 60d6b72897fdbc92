import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochpoisson.errors import ConfigurationError, DifferentiationError, FieldEvaluationError
from stochpoisson.geometry import (
    Polynomial,
    ScalarField,
    TensorField,
    as_scalar_field,
    central_difference,
    fd_gradient,
    fd_jacobian,
)


def plain(dim, fn):
    """Scalar field without analytic gradient."""
    return ScalarField(dim, fn)


def test_fd_gradient_square():
    f = plain(1, lambda z: z[..., 0] ** 2)
    assert fd_gradient(f, [3.0]) == pytest.approx([6.0], abs=1e-8)


def test_fd_gradient_constant_is_zero():
    f = plain(3, lambda z: np.full(z.shape[:-1], 7.0))
    assert np.all(fd_gradient(f, [0.3, -2.0, 11.0]) == 0.0)


def test_fd_gradient_bilinear():
    f = plain(2, lambda z: z[..., 0] * z[..., 1])
    assert fd_gradient(f, [2.0, 5.0]) == pytest.approx([5.0, 2.0], abs=1e-8)


def test_fd_gradient_prefers_analytic():
    calls = []

    def grad(z):
        calls.append(1)
        return np.stack([2 * z[..., 0]], axis=-1)

    f = ScalarField(1, lambda z: z[..., 0] ** 2, grad=grad)
    assert fd_gradient(f, [4.0]) == pytest.approx([8.0], rel=0, abs=0)
    assert calls


def test_fd_gradient_explicit_step_and_bad_step():
    f = plain(1, lambda z: z[..., 0] ** 3)
    assert fd_gradient(f, [1.0], step=1e-4) == pytest.approx([3.0], rel=1e-7)
    with pytest.raises(ConfigurationError):
        fd_gradient(f, [1.0], step=0.0)


def test_fd_gradient_names_failing_coordinate():
    # finite at the point, NaN one step up along coordinate 1
    f = plain(2, lambda z: np.sqrt(1.0 - z[..., 1]))
    with pytest.raises(DifferentiationError) as info:
        fd_gradient(f, [0.0, 1.0])
    assert info.value.index == 1


def test_non_finite_points_and_values_rejected():
    f = plain(1, lambda z: np.log(z[..., 0]))
    with pytest.raises(FieldEvaluationError):
        f([-1.0])
    with pytest.raises(FieldEvaluationError):
        f([np.nan])
    with pytest.raises(ConfigurationError):
        f([1.0, 2.0])


def test_fd_jacobian_examples():
    swap = [plain(2, lambda z: z[..., 1]), plain(2, lambda z: z[..., 0])]
    assert np.allclose(fd_jacobian(swap, [1.0, 1.0]), [[0, 1], [1, 0]], atol=1e-10)
    ident = TensorField(3, (3,), lambda z: z)
    assert np.allclose(fd_jacobian(ident, [0.4, -1.0, 2.0]), np.eye(3), atol=1e-9)
    poly = [plain(2, lambda z: z[..., 0] ** 2), plain(2, lambda z: z[..., 0] * z[..., 1])]
    assert np.allclose(fd_jacobian(poly, [2.0, 3.0]), [[4, 0], [3, 2]], atol=1e-6)


def test_batching_convention():
    f = plain(2, lambda z: z[..., 0] * z[..., 1] ** 2)
    z = np.arange(24, dtype=float).reshape(3, 4, 2) / 10
    g = fd_gradient(f, z)
    assert g.shape == (3, 4, 2)
    assert np.allclose(g[1, 2], fd_gradient(f, z[1, 2]), rtol=1e-12)


def test_polynomial_tables_and_derivatives():
    p = Polynomial.from_table(2, {"2,1": 3.0, "0,0": -1.0, (1, 0): 2.0})
    z = np.array([1.5, -0.5])
    assert p(z) == pytest.approx(3 * 1.5 ** 2 * -0.5 - 1 + 2 * 1.5)
    assert np.allclose(p.grad(z), [6 * 1.5 * -0.5 + 2, 3 * 1.5 ** 2])
    hess = p.derivative().derivative()(z)
    assert np.allclose(hess, [[6 * -0.5, 6 * 1.5], [6 * 1.5, 0.0]])
    assert Polynomial.from_table(2, p.to_table()).to_table() == p.to_table()
    with pytest.raises(ConfigurationError):
        Polynomial.from_table(2, {"1,0,0": 1.0})


def test_polynomial_nested_tensor_and_zero_variables():
    p = Polynomial.from_nested(2, [[{"1,0": 1.0}, 2.0], [0.0, {"0,2": 1.0}]])
    assert p.shape == (2, 2)
    assert np.allclose(p([3.0, 2.0]), [[3, 2], [0, 4]])
    assert np.allclose(p.derivative()([3.0, 2.0])[1, 1], [0, 4])
    c = Polynomial.constant(0, [1.0, 2.0])
    assert np.allclose(c(np.zeros((4, 0))), [[1, 2]] * 4)


def test_scalar_field_arithmetic_product_rule():
    x = as_scalar_field(Polynomial.coordinate(2, 0))
    y = as_scalar_field(Polynomial.coordinate(2, 1))
    f = x * y + 3.0 - y
    z = np.array([2.0, 5.0])
    assert f(z) == pytest.approx(2 * 5 + 3 - 5)
    assert np.allclose(f.gradient(z), [5.0, 2.0 - 1.0])


def test_central_difference_matches_polynomial_derivative():
    p = Polynomial.from_nested(3, [{"1,1,0": 1.0}, {"0,0,3": 2.0}])
    z = np.array([0.7, -1.2, 1.1])
    fd = central_difference(p._evaluate, z, 3)
    assert np.allclose(fd, p.derivative()(z), rtol=1e-8, atol=1e-9)


coeffs = st.lists(st.floats(-3, 3), min_size=6, max_size=6)
points = st.lists(st.floats(-5, 5), min_size=2, max_size=2)


@settings(max_examples=60, deadline=None)
@given(coeffs, points)
def test_property_fd_matches_analytic_gradient(c, z):
    exps = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 3)]
    p = as_scalar_field(Polynomial(2, exps, c))
    exact = p.gradient(z)
    fd = fd_gradient(plain(2, p._evaluate), z)
    assert np.max(np.abs(fd - exact) / (1 + np.abs(exact))) < 1e-5


@settings(max_examples=40, deadline=None)
@given(coeffs, coeffs, points)
def test_property_fd_gradient_linear(c1, c2, z):
    exps = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 3)]
    f = plain(2, Polynomial(2, exps, c1)._evaluate)
    g = plain(2, Polynomial(2, exps, c2)._evaluate)
    total = plain(2, lambda w: f._evaluate(w) + g._evaluate(w))
    lhs = fd_gradient(total, z)
    rhs = fd_gradient(f, z) + fd_gradient(g, z)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * (1 + np.max(np.abs(rhs)))
