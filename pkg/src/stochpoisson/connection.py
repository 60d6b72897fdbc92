"""Principal connections on trivialised bundles with a Lie algebra fiber.

Index conventions (fixed package-wide):

* Lie algebra constants ``C[a, b, c] = C^a_{bc}``, i.e.
  ``[eps_b, eps_c] = C^a_{bc} eps_a``.
* Connection coefficients ``A[a, i] = A^a_i`` and their derivatives
  ``dA[a, i, k] = d A^a_i / d x^k``.
* Curvature ``B[a, i, j] = d_i A^a_j - d_j A^a_i + C^a_{bc} A^b_i A^c_j``.
* ``gl(n)`` basis ``e^i_j`` sits at flat index ``i*n + j``; ``ga(n)``
  appends the translations ``e_j`` at ``n*n + j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, StructureError
from .geometry import Polynomial, TensorField, as_points, as_tensor_field


class LieAlgebraSpec:
    """Structure constants of a finite-dimensional real Lie algebra.

    Antisymmetry in the lower indices and the Jacobi identity are checked
    to ``tol`` at construction.
    """

    def __init__(self, constants, label: str = "g", tol: float = 1e-12):
        c = np.array(constants, dtype=float)
        if c.ndim != 3 or len(set(c.shape)) != 1:
            raise ConfigurationError(f"constants must be p x p x p, got {c.shape}", field=label)
        asym = np.max(np.abs(c + np.swapaxes(c, 1, 2)), initial=0.0)
        if asym > tol:
            raise StructureError(f"{label}: constants not antisymmetric (violation {asym:.3g})")
        jac = np.max(np.abs(jacobi_defect(c)), initial=0.0)
        if jac > tol:
            raise StructureError(f"{label}: Jacobi identity fails (residual {jac:.3g})")
        c.setflags(write=False)
        self.constants = c
        self.label = label

    @property
    def p(self) -> int:
        return self.constants.shape[0]

    def bracket(self, u, v):
        """``[u, v]^a = C^a_{bc} u^b v^c``; broadcasts over leading axes."""
        return np.einsum("abc,...b,...c->...a", self.constants, u, v)

    def __repr__(self):
        return f"LieAlgebraSpec({self.label!r}, p={self.p})"


def jacobi_defect(c):
    """``C^e_{ab} C^d_{ec} + cyclic(a, b, c)`` as a ``[d, a, b, c]`` array."""
    t = np.einsum("eab,dec->dabc", c, c)
    return t + np.einsum("dbca->dabc", t) + np.einsum("dcab->dabc", t)


def _levi_civita():
    eps = np.zeros((3, 3, 3))
    for (i, j, k), s in {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1,
                         (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}.items():
        eps[i, j, k] = s
    return eps


LEVI_CIVITA = _levi_civita()


def so3() -> LieAlgebraSpec:
    """``[e_a, e_b] = eps_{abc} e_c``."""
    return LieAlgebraSpec(np.transpose(LEVI_CIVITA, (2, 0, 1)), label="so(3)")


def so21() -> LieAlgebraSpec:
    """``[e1, e2] = -e3``, ``[e2, e3] = e1``, ``[e3, e1] = e2``."""
    c = np.transpose(LEVI_CIVITA, (2, 0, 1)).copy()
    c[2] *= -1.0
    return LieAlgebraSpec(c, label="so(2,1)")


def se3() -> LieAlgebraSpec:
    """Semidirect product ``so(3) x R^3`` (rotations first, then translations)."""
    eps = np.transpose(LEVI_CIVITA, (2, 0, 1))
    c = np.zeros((6, 6, 6))
    c[:3, :3, :3] = eps
    c[3:, :3, 3:] = eps
    c[3:, 3:, :3] = -np.transpose(eps, (0, 2, 1))
    return LieAlgebraSpec(c, label="se(3)")


def abelian(p: int) -> LieAlgebraSpec:
    return LieAlgebraSpec(np.zeros((p, p, p)), label=f"R^{p}")


def gl(n: int) -> LieAlgebraSpec:
    """``[e^i_j, e^l_k] = delta^i_k e^l_j - delta^l_j e^i_k``."""
    return LieAlgebraSpec(_gl_constants(n, n * n), label=f"gl({n})")


def ga(n: int) -> LieAlgebraSpec:
    """``gl(n)`` plus translations: ``[e^i_j, e_k] = delta^i_k e_j``, ``[e_i, e_j] = 0``."""
    p = n * n + n
    c = _gl_constants(n, p)
    for i in range(n):
        for j in range(n):
            # [e^i_j, e_i] = e_j
            c[n * n + j, i * n + j, n * n + i] += 1.0
            c[n * n + j, n * n + i, i * n + j] -= 1.0
    return LieAlgebraSpec(c, label=f"ga({n})")


def _gl_constants(n, p):
    c = np.zeros((p, p, p))
    for i in range(n):
        for j in range(n):
            for l in range(n):
                for k in range(n):
                    left, right = i * n + j, l * n + k
                    if i == k:
                        c[l * n + j, left, right] += 1.0
                    if l == j:
                        c[i * n + k, left, right] -= 1.0
    return c


ALGEBRAS = {"so3": so3, "so21": so21, "se3": se3}


def algebra_from_name(name: str) -> LieAlgebraSpec:
    """``so3``, ``so21``, ``se3``, ``abelian:p``, ``gl:n`` or ``ga:n``."""
    if name in ALGEBRAS:
        return ALGEBRAS[name]()
    kind, _, size = name.partition(":")
    builders = {"abelian": abelian, "gl": gl, "ga": ga}
    if kind not in builders or not size.isdigit():
        raise ConfigurationError(f"unknown Lie algebra {name!r}", field="algebra")
    return builders[kind](int(size))


class MappedField(TensorField):
    """A field obtained by a fixed linear index map from source fields.

    The same map applied to the sources' derivatives (which carry extra
    trailing axes) gives the derivative, so exactness propagates.
    ``fn(values, extra)`` receives the source arrays and the number of
    trailing derivative axes.
    """

    def __init__(self, sources, fn, shape, name="mapped", extra=0):
        self._sources = list(sources)
        self._fn = fn
        self._extra = extra
        dim = self._sources[0].dim
        super().__init__(
            dim,
            shape,
            lambda z: fn([s._evaluate(z) for s in self._sources], extra),
            name=name,
            noise_level=max(s.noise_level for s in self._sources),
        )
        self._mapped_derivative = None

    @property
    def has_derivative(self):
        return all(s.has_derivative for s in self._sources)

    def derivative(self):
        if self._mapped_derivative is None:
            self._mapped_derivative = MappedField(
                [s.derivative() for s in self._sources],
                self._fn,
                self.shape + (self.dim,),
                name=f"d[{self.name}]",
                extra=self._extra + 1,
            )
        return self._mapped_derivative


class PrincipalConnection:
    """Local connection coefficients ``A^a_i(x)`` valued in a Lie algebra."""

    def __init__(self, algebra: LieAlgebraSpec, n: int, A, name="A"):
        self.algebra = algebra
        self.n = int(n)
        self.A = as_tensor_field(A, self.n, (algebra.p, self.n), name=name)
        self._curvature = None

    @property
    def p(self):
        return self.algebra.p

    def coefficients(self, x):
        return self.A(x)

    def curvature_field(self) -> TensorField:
        """Curvature as a field of shape ``(p, n, n)`` with composed derivative."""
        if self._curvature is None:
            c = self.algebra.constants
            dA = self.A.derivative()
            d2A = dA.derivative()

            def value(x):
                a, da = self.A._evaluate(x), dA._evaluate(x)
                return _curvature(c, a, da)

            def deriv(x):
                a, da, dda = self.A._evaluate(x), dA._evaluate(x), d2A._evaluate(x)
                out = np.swapaxes(dda, -3, -2) - dda
                q = np.einsum("abc,...bik,...cj->...aijk", c, da, a)
                q = q + np.einsum("abc,...bi,...cjk->...aijk", c, a, da)
                return out + 0.5 * (q - np.swapaxes(q, -3, -2))

            self._curvature = TensorField(
                self.n,
                (self.p, self.n, self.n),
                value,
                derivative=TensorField(self.n, (self.p, self.n, self.n, self.n), deriv,
                                       name="dB", noise_level=d2A.noise_level),
                name="B",
                noise_level=dA.noise_level,
            )
        return self._curvature


def _curvature(c, a, da):
    # da[a, i, k] = d_k A^a_i, so d_i A^a_j = da[a, j, i]
    out = np.swapaxes(da, -2, -1) - da
    q = np.einsum("abc,...bi,...cj->...aij", c, a, a)
    return out + 0.5 * (q - np.swapaxes(q, -2, -1))


def curvature(conn: PrincipalConnection, x) -> np.ndarray:
    """Curvature tensor ``B^a_{ij}`` at ``x``; exactly antisymmetric in ``(i, j)``."""
    x = as_points(x, conn.n)
    return conn.curvature_field()(x)


def _vector_field(X, n, name):
    return as_tensor_field(X, n, (n,), name=name)


def _section(xi, n, p, name):
    return as_tensor_field(xi, n, (p,), name=name)


def covariant_derivative(conn: PrincipalConnection, X, xi, x) -> np.ndarray:
    """``X^i (d_i xi^a + C^a_{bc} A^b_i xi^c)`` at ``x``.

    ``X`` and ``xi`` may be constant arrays or fields on the base.
    """
    x = as_points(x, conn.n)
    X = _vector_field(X, conn.n, "X")
    xi = _section(xi, conn.n, conn.p, "xi")
    Xv, a, s, ds = X(x), conn.A(x), xi(x), xi.jacobian(x)
    inner = ds + np.einsum("abc,...bi,...c->...ai", conn.algebra.constants, a, s)
    return np.einsum("...i,...ai->...a", Xv, inner)


def section_bracket(conn: PrincipalConnection, first, second, x):
    """Bracket of ``X1 + xi1`` and ``X2 + xi2`` on ``TM + adjoint bundle``.

    Returns ``(vector, algebra vector)``: the Lie bracket of the vector
    fields, and ``nabla_X1 xi2 - nabla_X2 xi1 - B(X1, X2) + [xi1, xi2]``.
    """
    x = as_points(x, conn.n)
    X1, xi1 = _vector_field(first[0], conn.n, "X1"), _section(first[1], conn.n, conn.p, "xi1")
    X2, xi2 = _vector_field(second[0], conn.n, "X2"), _section(second[1], conn.n, conn.p, "xi2")
    v1, v2 = X1(x), X2(x)
    base = np.einsum("...j,...ij->...i", v1, X2.jacobian(x)) - np.einsum(
        "...j,...ij->...i", v2, X1.jacobian(x)
    )
    B = curvature(conn, x)
    alg = (
        covariant_derivative(conn, X1, xi2, x)
        - covariant_derivative(conn, X2, xi1, x)
        - np.einsum("...aij,...i,...j->...a", B, v1, v2)
        + conn.algebra.bracket(xi1(x), xi2(x))
    )
    return base, alg


def pack_ga(gl_part, tr_part, extra=0):
    """Assemble ``ga(n)``-valued coefficients from separate gl and translation tables.

    ``gl_part[h, k, r] = A^h_{kr}`` is the coefficient of ``e^k_h`` and
    ``tr_part[h, r] = A^h_r`` the coefficient of ``e_h``.  Leading batch
    axes and ``extra`` trailing axes pass through.
    """
    nb = gl_part.ndim - 3 - extra
    n = gl_part.shape[nb]
    swapped = np.swapaxes(gl_part, nb, nb + 1)
    flat = swapped.reshape(swapped.shape[:nb] + (n * n,) + swapped.shape[nb + 2:])
    return np.concatenate([flat, tr_part], axis=nb)


@dataclass(frozen=True)
class AffineConnection:
    """Connection on an affine frame bundle given by ``(A^h_{kr}, A^h_k)``.

    ``gl_coeffs[h, k, r] = A^h_{kr}`` and ``tr_coeffs[h, k] = A^h_k`` are
    fields on the ``n``-dimensional base.
    """

    n: int
    gl_coeffs: TensorField
    tr_coeffs: TensorField
    connection: PrincipalConnection

    def gl_covariant_derivative(self, x) -> np.ndarray:
        """``nabla_{d/dx^i} e^l_k`` as ``ga(n)`` vectors, indexed ``[i, l, k, a]``."""
        return _basis_derivatives(self, x)[0]

    def translation_derivative(self, x) -> np.ndarray:
        """``nabla_{d/dx^r} e_k`` as ``ga(n)`` vectors, indexed ``[r, k, a]``."""
        return _basis_derivatives(self, x)[1]

    def curvature_split(self, x):
        """``(B^l_{kij}, B^l_{ij})`` as arrays ``[l, k, i, j]`` and ``[l, i, j]``."""
        x = as_points(x, self.n)
        return self.curvature_fields()[0](x), self.curvature_fields()[1](x)

    def curvature_fields(self):
        n = self.n
        curv = self.connection.curvature_field()
        gl_part = MappedField([curv], lambda v, e: _split_leading(v[0], n, e, 2)[0],
                              (n, n, n, n), name="B_gl")
        tr_part = MappedField([curv], lambda v, e: _split_leading(v[0], n, e, 2)[1],
                              (n, n, n), name="B_tr")
        return gl_part, tr_part


def _split_leading(values, n, extra, tail):
    """Split the algebra axis located before ``tail`` tensor axes and ``extra`` derivative axes."""
    axis = values.ndim - 1 - tail - extra
    gl_flat = np.take(values, np.arange(n * n), axis=axis)
    tr = np.take(values, np.arange(n * n, n * n + n), axis=axis)
    gl_blk = gl_flat.reshape(gl_flat.shape[:axis] + (n, n) + gl_flat.shape[axis + 1:])
    # flat index k*n + l  ->  [l, k]
    return np.swapaxes(gl_blk, axis, axis + 1), tr


def _basis_derivatives(aff, x):
    conn = aff.connection
    n, p = aff.n, conn.p
    x = as_points(x, n)
    a = conn.A(x)
    # nabla_i eps_c = C^d_{bc} A^b_i eps_d  (constant basis sections)
    ad = np.einsum("dbc,...bi->...icd", conn.algebra.constants, a)
    gl_rows = ad[..., : n * n, :]
    gl_rows = gl_rows.reshape(gl_rows.shape[:-2] + (n, n, p))
    return gl_rows, ad[..., n * n:, :]


def affine_connection_package(gl_coeffs, tr_coeffs, n: int) -> AffineConnection:
    """Bundle ``(A^h_{kr}, A^h_k)`` into a ``ga(n)`` principal connection."""
    G = as_tensor_field(gl_coeffs, n, (n, n, n), name="A_gl")
    T = as_tensor_field(tr_coeffs, n, (n, n), name="A_tr")
    if isinstance(G, Polynomial) and isinstance(T, Polynomial):
        A = _pack_polynomials(G, T)
    else:
        A = MappedField([G, T], lambda v, e: pack_ga(v[0], v[1], e), (n * n + n, n), name="A")
    return AffineConnection(n, G, T, PrincipalConnection(ga(n), n, A))


def _pack_polynomials(G, T):
    exps = np.concatenate([G.exponents, T.exponents])
    coefs_g = np.zeros((len(exps),) + G.shape)
    coefs_t = np.zeros((len(exps),) + T.shape)
    coefs_g[: len(G.exponents)] = G.coeffs
    coefs_t[len(G.exponents):] = T.coeffs
    return Polynomial(G.dim, exps, pack_ga(coefs_g, coefs_t), name="A")


@dataclass(frozen=True)
class GLRefinementData:
    """Connection data on ``P/K`` with coordinates ``(x, q)``.

    ``x_coeffs[h, k, i] = A^h_{ki}`` (``dx^i`` directions) and
    ``q_coeffs[h, k, i] = B^h_{ki}`` (``dq^i`` directions).  The three
    curvature blocks ``[l, k, i, j]`` (``xx``, ``qq``, ``xq``) are
    independent inputs; :func:`gl_refinement_data` derives them from the
    coefficients when not supplied.
    """

    n: int
    x_coeffs: TensorField
    q_coeffs: TensorField
    curv_xx: TensorField
    curv_qq: TensorField
    curv_xq: TensorField
    derived_curvature: bool


def gl_refinement_data(x_coeffs, q_coeffs, n, curv_xx=None, curv_qq=None, curv_xq=None):
    dim = 2 * n
    X = as_tensor_field(x_coeffs, dim, (n, n, n), name="A_x")
    Q = as_tensor_field(q_coeffs, dim, (n, n, n), name="A_q")
    given = [c is not None for c in (curv_xx, curv_qq, curv_xq)]
    if any(given) and not all(given):
        raise ConfigurationError("supply all three curvature blocks or none", field="curvature")
    if all(given):
        shape = (n, n, n, n)
        return GLRefinementData(
            n, X, Q,
            as_tensor_field(curv_xx, dim, shape, name="B_xx"),
            as_tensor_field(curv_qq, dim, shape, name="B_qq"),
            as_tensor_field(curv_xq, dim, shape, name="B_xq"),
            derived_curvature=False,
        )

    def pack(values, extra):
        # coefficient of e^k_h in the dx^i / dq^i direction -> algebra index k*n+h
        parts = []
        for v in values:
            nb = v.ndim - 3 - extra
            s = np.swapaxes(v, nb, nb + 1)
            parts.append(s.reshape(s.shape[:nb] + (n * n,) + s.shape[nb + 2:]))
        nb = parts[0].ndim - 2 - extra
        return np.concatenate(parts, axis=nb + 1)

    A = MappedField([X, Q], pack, (n * n, dim), name="A_PK")
    curv = PrincipalConnection(gl(n), dim, A).curvature_field()

    def block(rows, cols):
        def fn(v, extra):
            values = v[0]
            axis = values.ndim - 3 - extra
            blk = np.take(np.take(values, rows, axis=axis + 1), cols, axis=axis + 2)
            flat = blk.reshape(blk.shape[:axis] + (n, n) + blk.shape[axis + 1:])
            return np.swapaxes(flat, axis, axis + 1)

        return fn

    xs, qs = np.arange(n), np.arange(n, dim)
    shape = (n, n, n, n)
    return GLRefinementData(
        n, X, Q,
        MappedField([curv], block(xs, xs), shape, name="B_xx"),
        MappedField([curv], block(qs, qs), shape, name="B_qq"),
        MappedField([curv], block(xs, qs), shape, name="B_xq"),
        derived_curvature=True,
    )
