"""Chart-coordinate numerics: fields, polynomials and finite differences.

Every field in the package follows one batching convention: the point
argument is an array of shape ``(..., dim)`` (coordinates on the last axis)
and the value has shape ``(...) + field.shape``.  Field functions written
with ``z[..., i]`` indexing therefore evaluate whole ensembles at once.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DifferentiationError, FieldEvaluationError

EPS = np.finfo(float).eps
# Central differences of an exact function: truncation ~h^2, rounding ~eps/h.
CBRT_EPS = EPS ** (1.0 / 3.0)
# Differentiating a function that is itself a central difference (noise
# ~eps^(2/3)) balances at h ~ eps^(2/9).
NESTED_EPS = EPS ** (2.0 / 9.0)


def as_points(z, dim: int) -> np.ndarray:
    """Validate chart coordinates: trailing axis ``dim``, all entries finite."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z.reshape(1)
    if z.shape[-1] != dim:
        raise ConfigurationError(
            f"point has {z.shape[-1]} coordinates, expected {dim}", field="point"
        )
    if not np.all(np.isfinite(z)):
        raise FieldEvaluationError("point has non-finite coordinates")
    return z


def flat_points(z, dim: int) -> np.ndarray:
    """``as_points`` reshaped to ``(N, dim)``; also valid for ``dim == 0``."""
    z = as_points(z, dim)
    return z.reshape(int(np.prod(z.shape[:-1])), dim)


def central_difference(evaluate, z, dim, step_scale=CBRT_EPS, step=None, name="field"):
    """Central-difference derivative of an array-valued function.

    Returns an array of shape ``(...) + out_shape + (dim,)``; the last axis
    indexes the coordinate of differentiation.  Steps are
    ``step_scale * max(1, |z_I|)`` per coordinate unless ``step`` is given.
    """
    z = np.asarray(z, dtype=float)
    if step is None:
        h = step_scale * np.maximum(1.0, np.abs(z))
    else:
        if not step > 0:
            raise ConfigurationError("finite-difference step must be positive", field="step")
        h = np.full(z.shape, float(step))
    columns = []
    for index in range(dim):
        zp = z.copy()
        zm = z.copy()
        zp[..., index] += h[..., index]
        zm[..., index] -= h[..., index]
        try:
            fp = evaluate(zp)
            fm = evaluate(zm)
        except FieldEvaluationError as exc:
            raise DifferentiationError(
                f"{name}: non-finite evaluation while differentiating along coordinate {index}",
                index=index,
            ) from exc
        # exact spacing actually represented in floating point
        denom = zp[..., index] - zm[..., index]
        denom = denom.reshape(denom.shape + (1,) * (fp.ndim - denom.ndim))
        columns.append((fp - fm) / denom)
    if not columns:
        out = np.asarray(evaluate(z))
        return np.zeros(out.shape + (0,))
    return np.stack(columns, axis=-1)


class TensorField:
    """Array-valued smooth field on an open subset of ``R^dim``.

    ``derivative`` may be another :class:`TensorField` of shape
    ``shape + (dim,)`` or a plain callable with that output; when omitted the
    derivative is taken by central differences.  ``noise_level`` counts how
    many finite-difference layers the values already carry and selects the
    differencing step accordingly.
    """

    def __init__(self, dim, shape, func, derivative=None, name=None, noise_level=0):
        self.dim = int(dim)
        self.shape = tuple(int(s) for s in shape)
        self._func = func
        self.name = name or getattr(func, "__name__", "field")
        self.noise_level = int(noise_level)
        if derivative is not None and not isinstance(derivative, TensorField):
            derivative = TensorField(
                self.dim, self.shape + (self.dim,), derivative, name=f"d[{self.name}]"
            )
        self._derivative = derivative
        self._fd_derivative = None

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, dim={self.dim}, shape={self.shape})"

    def __call__(self, z):
        return self._evaluate(as_points(z, self.dim))

    def _evaluate(self, z):
        with np.errstate(all="ignore"):
            out = np.asarray(self._func(z), dtype=float)
        target = z.shape[:-1] + self.shape
        if out.shape != target:
            try:
                out = np.broadcast_to(out, target)
            except ValueError:
                raise FieldEvaluationError(
                    f"{self.name}: returned shape {out.shape}, expected {target}"
                ) from None
        if not np.all(np.isfinite(out)):
            raise FieldEvaluationError(f"{self.name}: non-finite value")
        return out

    @property
    def has_derivative(self) -> bool:
        return self._derivative is not None

    def derivative(self) -> "TensorField":
        if self._derivative is not None:
            return self._derivative
        if self._fd_derivative is None:
            scale = CBRT_EPS if self.noise_level == 0 else NESTED_EPS
            evaluate = self._evaluate
            dim, name = self.dim, self.name

            def fd(z):
                return central_difference(evaluate, z, dim, step_scale=scale, name=name)

            self._fd_derivative = TensorField(
                dim,
                self.shape + (dim,),
                fd,
                name=f"fd[{name}]",
                noise_level=self.noise_level + 1,
            )
        return self._fd_derivative

    def jacobian(self, z):
        return self.derivative()(z)


class ScalarField(TensorField):
    """Real-valued field with optional analytic gradient.

    Fields support ``+``, ``-`` and ``*`` (with each other and with numbers);
    gradients of results are analytic whenever both operands have one.
    """

    def __init__(self, dim, func, grad=None, name=None, noise_level=0):
        super().__init__(dim, (), func, derivative=grad, name=name, noise_level=noise_level)

    @property
    def grad(self) -> Optional[TensorField]:
        return self._derivative

    def gradient(self, z):
        return fd_gradient(self, z)

    def _binary(self, other, op):
        if isinstance(other, (int, float, np.floating, np.integer)):
            other = constant(self.dim, float(other))
        other = as_scalar_field(other)
        if other.dim != self.dim:
            raise ConfigurationError(f"cannot combine fields of dim {self.dim} and {other.dim}")
        a, b = self, other
        value, grad = op(a, b)
        return ScalarField(
            self.dim,
            value,
            grad=grad,
            name=f"({a.name}{_OP_NAMES[op]}{b.name})",
            noise_level=max(a.noise_level, b.noise_level),
        )

    def __add__(self, other):
        return self._binary(other, _add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, _sub)

    def __rsub__(self, other):
        return (-1.0 * self) + other

    def __mul__(self, other):
        return self._binary(other, _mul)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def _both_grads(a, b):
    return a.grad is not None and b.grad is not None


def _add(a, b):
    grad = (lambda z: a.grad._evaluate(z) + b.grad._evaluate(z)) if _both_grads(a, b) else None
    return (lambda z: a._evaluate(z) + b._evaluate(z)), grad


def _sub(a, b):
    grad = (lambda z: a.grad._evaluate(z) - b.grad._evaluate(z)) if _both_grads(a, b) else None
    return (lambda z: a._evaluate(z) - b._evaluate(z)), grad


def _mul(a, b):
    def grad(z):
        return (
            a._evaluate(z)[..., None] * b.grad._evaluate(z)
            + b._evaluate(z)[..., None] * a.grad._evaluate(z)
        )

    return (lambda z: a._evaluate(z) * b._evaluate(z)), (grad if _both_grads(a, b) else None)


_OP_NAMES = {_add: "+", _sub: "-", _mul: "*"}


class Polynomial(TensorField):
    """Tensor-valued polynomial with exact derivatives of every order.

    ``exponents`` is a ``(K, nvars)`` integer table of monomials and
    ``coeffs`` has shape ``(K,) + shape``.  Configs describe polynomials as
    ``{"e1,e2,...": coefficient}`` maps, see :meth:`from_table`.
    """

    def __init__(self, nvars, exponents, coeffs, name=None):
        nvars = int(nvars)
        coeffs = np.asarray(coeffs, dtype=float)
        exponents = np.asarray(exponents, dtype=np.int64)
        # a zero-variable table cannot infer its row count from reshape(-1, 0)
        rows = -1 if nvars else coeffs.shape[0]
        exponents = exponents.reshape(rows, nvars)
        if coeffs.shape[:1] != exponents.shape[:1]:
            raise ConfigurationError("one coefficient block per monomial required")
        if np.any(exponents < 0):
            raise ConfigurationError("negative monomial exponent")
        self.exponents = exponents
        self.coeffs = coeffs
        super().__init__(nvars, coeffs.shape[1:], self._eval, name=name or "poly")
        self._poly_derivative = None

    def _eval(self, z):
        if len(self.exponents) == 0:
            return np.zeros(z.shape[:-1] + self.shape)
        monomials = np.prod(z[..., None, :] ** self.exponents, axis=-1)
        return np.tensordot(monomials, self.coeffs, axes=([-1], [0]))

    @property
    def has_derivative(self):
        return True

    @property
    def grad(self):
        return self.derivative() if self.shape == () else None

    def derivative(self) -> "Polynomial":
        if self._poly_derivative is None:
            n, shape = self.dim, self.shape
            rows, blocks = [], []
            for i in range(n):
                mask = self.exponents[:, i] > 0
                e = self.exponents[mask].copy()
                e[:, i] -= 1
                c = np.zeros((len(e),) + shape + (n,))
                power = self.exponents[mask, i].reshape((-1,) + (1,) * len(shape))
                c[..., i] = self.coeffs[mask] * power
                rows.append(e)
                blocks.append(c)
            exps = np.concatenate(rows) if rows else np.zeros((0, n), dtype=np.int64)
            coefs = np.concatenate(blocks) if blocks else np.zeros((0,) + shape + (n,))
            exps, coefs = _merge_monomials(exps, coefs)
            self._poly_derivative = Polynomial(n, exps, coefs, name=f"d[{self.name}]")
        return self._poly_derivative

    @classmethod
    def from_table(cls, nvars, table, name=None):
        """Scalar polynomial from ``{"e1,...,en": coefficient}``.

        Keys may also be integer sequences.  An empty mapping is the zero
        polynomial.
        """
        exps, coefs = [], []
        for key, value in dict(table or {}).items():
            exps.append(_parse_exponent(key, nvars))
            coefs.append(float(value))
        exps = np.asarray(exps, dtype=np.int64).reshape(-1, nvars)
        exps, coefs = _merge_monomials(exps, np.asarray(coefs, dtype=float))
        return cls(nvars, exps, coefs, name=name)

    @classmethod
    def from_nested(cls, nvars, nested, name=None):
        """Tensor polynomial from nested lists whose leaves are tables or numbers."""
        leaves = []

        def shape_of(node):
            if isinstance(node, (list, tuple)):
                inner = [shape_of(child) for child in node]
                if any(s != inner[0] for s in inner):
                    raise ConfigurationError("ragged polynomial table", field=name)
                return (len(node),) + (inner[0] if inner else ())
            leaves.append(node)
            return ()

        shape = shape_of(nested)
        polys = [
            leaf if isinstance(leaf, Polynomial)
            else cls.constant(nvars, float(leaf)) if isinstance(leaf, (int, float))
            else cls.from_table(nvars, leaf)
            for leaf in leaves
        ]
        if not polys:
            return cls(nvars, np.zeros((0, nvars)), np.zeros((0,) + shape), name=name)
        exps = np.concatenate([p.exponents for p in polys])
        coefs = np.zeros((len(exps), len(polys)))
        row = 0
        for j, p in enumerate(polys):
            coefs[row:row + len(p.exponents), j] = p.coeffs
            row += len(p.exponents)
        exps, coefs = _merge_monomials(exps, coefs.reshape((len(exps),) + shape))
        return cls(nvars, exps, coefs, name=name)

    @classmethod
    def constant(cls, nvars, value, name=None):
        value = np.asarray(value, dtype=float)
        return cls(nvars, np.zeros((1, nvars), dtype=np.int64), value[None], name=name)

    @classmethod
    def coordinate(cls, nvars, index, name=None):
        e = np.zeros((1, nvars), dtype=np.int64)
        e[0, index] = 1
        return cls(nvars, e, np.ones(1), name=name or f"z{index + 1}")

    @classmethod
    def linear(cls, coefficients, name=None):
        """``sum_i c_i z_i`` (a fiber-linear Hamiltonian when ``c`` is constant)."""
        c = np.asarray(coefficients, dtype=float)
        n = len(c)
        return cls(n, np.eye(n, dtype=np.int64), c, name=name)

    def to_table(self):
        """Inverse of :meth:`from_table` for scalar polynomials."""
        if self.shape != ():
            raise ConfigurationError("to_table only applies to scalar polynomials")
        return {
            ",".join(str(int(e)) for e in row): float(c)
            for row, c in zip(self.exponents, self.coeffs)
            if c != 0.0
        }


def _parse_exponent(key, nvars):
    if isinstance(key, str):
        parts = [p for p in key.replace("(", "").replace(")", "").split(",") if p.strip()]
        exps = [int(p) for p in parts]
    else:
        exps = [int(k) for k in key]
    if len(exps) != nvars:
        raise ConfigurationError(
            f"monomial {key!r} has {len(exps)} exponents, expected {nvars}", field="polynomial"
        )
    return exps


def _merge_monomials(exps, coefs):
    if len(exps) == 0:
        return exps, coefs
    uniq, inverse = np.unique(exps, axis=0, return_inverse=True)
    merged = np.zeros((len(uniq),) + coefs.shape[1:])
    np.add.at(merged, inverse.reshape(-1), coefs)
    return uniq, merged


FieldLike = Union[TensorField, Callable, np.ndarray, float]


def constant(dim, value, name=None) -> TensorField:
    """Constant field with an exact (zero) derivative."""
    value = np.asarray(value, dtype=float)
    if value.shape == ():
        return as_scalar_field(Polynomial.constant(dim, value, name=name))
    return Polynomial.constant(dim, value, name=name)


def coordinate(dim, index) -> ScalarField:
    return as_scalar_field(Polynomial.coordinate(dim, index))


def as_scalar_field(f, dim=None) -> ScalarField:
    if isinstance(f, ScalarField):
        field = f
    elif isinstance(f, TensorField):
        if f.shape != ():
            raise ConfigurationError(f"{f.name} is not scalar-valued")
        grad = f.derivative() if f.has_derivative else None
        field = ScalarField(f.dim, f._evaluate, grad=grad, name=f.name, noise_level=f.noise_level)
    elif callable(f):
        if dim is None:
            raise ConfigurationError("dimension required to wrap a plain callable")
        field = ScalarField(dim, f)
    else:
        if dim is None:
            raise ConfigurationError("dimension required for a constant field")
        field = constant(dim, float(f))
    if dim is not None and field.dim != dim:
        raise ConfigurationError(f"{field.name} has dim {field.dim}, expected {dim}")
    return field


def as_tensor_field(f, dim, shape, name=None) -> TensorField:
    """Coerce an array constant, callable or field into a TensorField."""
    shape = tuple(shape)
    if isinstance(f, TensorField):
        if f.dim != dim or f.shape != shape:
            raise ConfigurationError(
                f"expected dim {dim} shape {shape}, got dim {f.dim} shape {f.shape}", field=name
            )
        return f
    if callable(f):
        return TensorField(dim, shape, f, name=name)
    value = np.asarray(f, dtype=float)
    if value.shape != shape:
        raise ConfigurationError(f"expected shape {shape}, got {value.shape}", field=name)
    return Polynomial.constant(dim, value, name=name)


def fd_gradient(f, z, step: Optional[float] = None) -> np.ndarray:
    """Gradient of a scalar field; the analytic gradient wins when present."""
    f = as_scalar_field(f)
    z = as_points(z, f.dim)
    if f.grad is not None:
        return f.grad._evaluate(z)
    scale = CBRT_EPS if f.noise_level == 0 else NESTED_EPS
    return central_difference(f._evaluate, z, f.dim, step_scale=scale, step=step, name=f.name)


def fd_jacobian(F: Union[Sequence[ScalarField], TensorField], z) -> np.ndarray:
    """Jacobian with row ``I`` the gradient of component ``I``."""
    if isinstance(F, TensorField) and not isinstance(F, ScalarField):
        if len(F.shape) != 1:
            raise ConfigurationError("fd_jacobian needs a vector-valued field")
        return F.derivative()(z)
    components = [as_scalar_field(c) for c in F]
    dims = {c.dim for c in components}
    if len(dims) != 1:
        raise ConfigurationError("Jacobian components must share one dimension")
    return np.stack([fd_gradient(c, z) for c in components], axis=-2)
