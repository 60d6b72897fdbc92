"""Poisson structures as antisymmetric bracket-matrix fields.

``PoissonStructure.matrix(z)[I, J] = {z^I, z^J}``; brackets of functions
contract it with gradients, ``{f, g} = d_I f Lambda^{IJ} d_J g``, and the
Hamiltonian vector field of ``h`` is ``X_h^I = Lambda^{IJ} d_J h`` (so that
``dz^I = {z^I, h} dt``).

All shipped structures are affine in their fiber coordinates, which lets
each constructor supply an exact derivative of the matrix: see
:func:`fiber_affine_structure`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .algebroid import LieAlgebroid
from .connection import AffineConnection, GLRefinementData, PrincipalConnection
from .errors import ConfigurationError, StructureError
from .geometry import (
    ScalarField,
    TensorField,
    as_points,
    as_scalar_field,
    as_tensor_field,
    central_difference,
    coordinate,
    fd_gradient,
    flat_points,
)

ANTISYMMETRY_TOL = 1e-12


class PoissonStructure:
    """Bracket matrix field ``Lambda(z)`` on ``R^m``.

    ``derivative(z)`` (optional) returns ``d Lambda^{IJ} / d z^K`` with the
    differentiation index last.  Antisymmetry is verified at every
    evaluation.
    """

    def __init__(self, m, matrix, derivative=None, labels=None, name="P", blocks=None):
        self.m = int(m)
        self.name = name
        self.labels = list(labels) if labels is not None else [f"z{i + 1}" for i in range(self.m)]
        if len(self.labels) != self.m:
            raise ConfigurationError("one label per coordinate required", field="labels")
        self.blocks = dict(blocks or {})
        self.field = TensorField(self.m, (self.m, self.m), matrix, derivative=derivative,
                                 name=f"Lambda[{name}]")

    @property
    def has_analytic_derivative(self):
        return self.field.has_derivative

    def matrix(self, z):
        lam = self.field(z)
        _check_antisymmetric(lam, self.name)
        return lam

    def _matrix(self, z):
        lam = self.field._evaluate(z)
        _check_antisymmetric(lam, self.name)
        return lam

    def matrix_derivative(self, z, analytic=True):
        z = as_points(z, self.m)
        if analytic:
            return self.field.derivative()._evaluate(z)
        return _fd_matrix_derivative(self, z)

    def index(self, label):
        return self.labels.index(label)

    def __repr__(self):
        return f"PoissonStructure({self.name!r}, m={self.m})"


def _fd_matrix_derivative(P, z):
    return central_difference(P.field._evaluate, z, P.m, name=P.field.name)


def _check_antisymmetric(lam, name):
    scale = 1.0 + np.max(np.abs(lam), initial=0.0)
    violation = np.max(np.abs(lam + np.swapaxes(lam, -1, -2)), initial=0.0)
    if violation > ANTISYMMETRY_TOL * scale:
        raise StructureError(f"{name}: bracket matrix not antisymmetric (violation {violation:.3g})")


def _fields(P, *fs):
    out = [as_scalar_field(f, P.m) for f in fs]
    return out


def bracket(P: PoissonStructure, f, g, z) -> np.ndarray:
    """``{f, g}(z) = d_I f Lambda^{IJ}(z) d_J g``."""
    f, g = _fields(P, f, g)
    z = as_points(z, P.m)
    return np.einsum("...i,...ij,...j->...", fd_gradient(f, z), P._matrix(z), fd_gradient(g, z))


def bracket_field(P: PoissonStructure, f, g) -> ScalarField:
    """The field ``z -> {f, g}(z)``; it has no analytic gradient."""
    f, g = _fields(P, f, g)
    analytic = f.grad is not None and g.grad is not None

    def value(z):
        return np.einsum(
            "...i,...ij,...j->...", fd_gradient(f, z), P._matrix(z), fd_gradient(g, z)
        )

    return ScalarField(P.m, value, name=f"{{{f.name},{g.name}}}",
                       noise_level=0 if analytic else 1)


def hamiltonian_field(P: PoissonStructure, h, z) -> np.ndarray:
    """``X_h^I = Lambda^{IJ} d_J h``."""
    (h,) = _fields(P, h)
    z = as_points(z, P.m)
    return np.einsum("...ij,...j->...i", P._matrix(z), fd_gradient(h, z))


@dataclass(frozen=True)
class JacobiReport:
    """Per-sample maximum of the Jacobiator over all index triples."""

    residual: np.ndarray
    analytic: bool

    def max(self):
        return float(np.max(self.residual, initial=0.0))

    def passed(self, tol):
        return self.max() <= tol


def jacobiator(lam, dlam):
    """``Lambda^{LI} d_L Lambda^{JK} + cyclic(I, J, K)`` as an ``[..., I, J, K]`` array."""
    t = np.einsum("...li,...jkl->...ijk", lam, dlam)
    return t + np.einsum("...jki->...ijk", t) + np.einsum("...kij->...ijk", t)


def check_jacobi(P: PoissonStructure, samples, analytic: Optional[bool] = None) -> JacobiReport:
    """Jacobi residuals at ``samples``; analytic derivative used when available."""
    z = flat_points(samples, P.m)
    if analytic is None:
        analytic = P.has_analytic_derivative
    lam = P._matrix(z)
    dlam = P.matrix_derivative(z, analytic=analytic)
    res = np.abs(jacobiator(lam, dlam)).reshape(len(z), -1)
    return JacobiReport(np.max(res, axis=1, initial=0.0), analytic)


def antisymmetry_residual(P: PoissonStructure, samples) -> np.ndarray:
    z = flat_points(samples, P.m)
    lam = P.field._evaluate(z)
    return np.max(np.abs(lam + np.swapaxes(lam, -1, -2)).reshape(len(z), -1), axis=1)


def coordinate_functions(P: PoissonStructure):
    return [coordinate(P.m, i) for i in range(P.m)]


# ----------------------------------------------------------------------------
# fiber-affine assembly


def fiber_affine_structure(m, base, fiber, coefficients, tensors, labels, name, blocks=None):
    """Structure with ``Lambda = L0(c(x)) + L1(c(x)) . w``.

    ``base``/``fiber`` are index arrays splitting ``z`` into ``x`` and ``w``;
    ``coefficients`` maps names to fields on ``x``; ``tensors(coefs, constants)``
    returns ``(L0, L1)`` of shapes ``(..., m, m)`` and ``(..., m, m, len(w))``
    and must be linear in ``coefs`` once constant blocks are dropped
    (``constants=False``).  The matrix derivative is then exact up to the
    derivatives of the coefficient fields.
    """
    base = np.asarray(base, dtype=int)
    fiber = np.asarray(fiber, dtype=int)
    coefficients = dict(coefficients)
    derivs = {key: f.derivative() for key, f in coefficients.items()}

    def coefs_at(x):
        return {key: f._evaluate(x) for key, f in coefficients.items()}

    def matrix(z):
        x, w = z[..., base], z[..., fiber]
        L0, L1 = tensors(coefs_at(x), True)
        return L0 + np.einsum("...ijc,...c->...ij", L1, w)

    def derivative(z):
        x, w = z[..., base], z[..., fiber]
        coefs = coefs_at(x)
        _, L1 = tensors(coefs, True)
        out = np.zeros(z.shape[:-1] + (m, m, m))
        out[..., fiber] = L1
        dcoefs = {key: d._evaluate(x) for key, d in derivs.items()}
        for k, pos in enumerate(base):
            L0k, L1k = tensors({key: v[..., k] for key, v in dcoefs.items()}, False)
            out[..., pos] += L0k + np.einsum("...ijc,...c->...ij", L1k, w)
        return out

    return PoissonStructure(m, matrix, derivative=derivative, labels=labels, name=name,
                            blocks=blocks)


def _batch(arr, tensor_ndim):
    return arr.shape[: arr.ndim - tensor_ndim]


def _antisym_set(L, rows, cols, block):
    """Write ``block`` at ``(rows, cols)`` and its negative transpose."""
    L[..., rows[:, None], cols[None, :]] = block
    L[..., cols[:, None], rows[None, :]] = -np.swapaxes(block, -1, -2)


def _antisym_set1(L1, rows, cols, block):
    """Same as :func:`_antisym_set` for ``L1`` blocks with a trailing fiber axis."""
    L1[..., rows[:, None], cols[None, :], :] = block
    L1[..., cols[:, None], rows[None, :], :] = -np.swapaxes(block, -2, -3)


# ----------------------------------------------------------------------------
# constructors


def constant_structure(matrix, labels=None, name="constant") -> PoissonStructure:
    lam = np.asarray(matrix, dtype=float)
    m = lam.shape[0]
    _check_antisymmetric(lam, name)
    return PoissonStructure(
        m,
        lambda z: np.broadcast_to(lam, z.shape[:-1] + (m, m)),
        derivative=lambda z: np.zeros(z.shape[:-1] + (m, m, m)),
        labels=labels,
        name=name,
    )


def canonical_structure(n: int) -> PoissonStructure:
    """``{x^i, p_j} = delta^i_j`` on ``(x, p)``."""
    lam = np.zeros((2 * n, 2 * n))
    lam[:n, n:] = np.eye(n)
    lam[n:, :n] = -np.eye(n)
    labels = [f"x{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]
    return constant_structure(lam, labels=labels, name="canonical")


def linear_lie_poisson(structure_constants, labels=None, name="lie-poisson") -> PoissonStructure:
    """``{x^i, x^j} = Lambda^{ij}_k x^k``; input indexed ``[i, j, k]``."""
    c = np.array(structure_constants, dtype=float)
    if c.ndim != 3 or len(set(c.shape)) != 1:
        raise ConfigurationError(f"structure constants must be n x n x n, got {c.shape}",
                                 field="structure_constants")
    violation = np.max(np.abs(c + np.swapaxes(c, 0, 1)), initial=0.0)
    if violation > ANTISYMMETRY_TOL:
        raise StructureError(f"structure constants not antisymmetric in (i, j): {violation:.3g}")
    c = 0.5 * (c - np.swapaxes(c, 0, 1))
    c.setflags(write=False)
    n = c.shape[0]

    P = PoissonStructure(
        n,
        lambda z: np.einsum("ijk,...k->...ij", c, z),
        derivative=lambda z: np.broadcast_to(c, z.shape[:-1] + c.shape),
        labels=labels or [f"x{i + 1}" for i in range(n)],
        name=name,
    )
    P.structure_constants = c
    return P


def from_algebroid(algebroid: LieAlgebroid) -> PoissonStructure:
    """Canonical structure on the dual bundle, coordinates ``(x, xi)``.

    ``{x^i, x^j} = 0``, ``{x^i, xi_a} = b^i_a``, ``{xi_a, xi_b} = C^g_{ab} xi_g``.
    """
    n, r = algebroid.n, algebroid.r
    m = n + r
    X, XI = np.arange(n), np.arange(n, m)

    def tensors(coefs, constants):
        b, c = coefs["anchor"], coefs["structure"]
        batch = _batch(b, 2)
        L0 = np.zeros(batch + (m, m))
        L1 = np.zeros(batch + (m, m, r))
        _antisym_set(L0, X, XI, b)
        # L1[xi_a, xi_b, g] = C[g, a, b]
        L1[..., n:, n:, :] = np.moveaxis(c, -3, -1)
        return L0, L1

    labels = [f"x{i + 1}" for i in range(n)] + [f"xi{a + 1}" for a in range(r)]
    return fiber_affine_structure(
        m, X, XI, {"anchor": algebroid.anchor, "structure": algebroid.structure},
        tensors, labels, name=f"dual({algebroid.name})",
        blocks={"x": (0, n), "xi": (n, m)},
    )


def whitney_sum_structure(algebroid: LieAlgebroid, pp=None, x_xi=None, p_xi=None) -> PoissonStructure:
    """Structure on ``T*M + A*`` with coordinates ``(x, p, xi)``.

    ``{x^i, p_j} = delta``, ``{xi_a, xi_b} = C^g_{ab} xi_g``; the blocks
    ``{p_i, p_j}`` (``pp``, ``n x n``), ``{x^i, xi_a}`` (``x_xi``) and
    ``{p_i, xi_a}`` (``p_xi``, both ``n x r``) are fields on the base and
    default to zero.  ``x_xi="anchor"`` injects ``b^i_a``.
    """
    n, r = algebroid.n, algebroid.r
    m = 2 * n + r
    X, PP, XI = np.arange(n), np.arange(n, 2 * n), np.arange(2 * n, m)
    coefficients = {"structure": algebroid.structure}
    if isinstance(x_xi, str):
        if x_xi != "anchor":
            raise ConfigurationError(f"unknown block preset {x_xi!r}", field="x_xi")
        coefficients["x_xi"] = algebroid.anchor
    elif x_xi is not None:
        coefficients["x_xi"] = as_tensor_field(x_xi, n, (n, r), name="x_xi")
    if pp is not None:
        coefficients["pp"] = as_tensor_field(pp, n, (n, n), name="pp")
    if p_xi is not None:
        coefficients["p_xi"] = as_tensor_field(p_xi, n, (n, r), name="p_xi")
    if pp is not None:
        probe = coefficients["pp"](np.zeros(n))
        if np.max(np.abs(probe + probe.T), initial=0.0) > ANTISYMMETRY_TOL:
            raise StructureError("supplied {p_i, p_j} block is not antisymmetric")

    def tensors(coefs, constants):
        c = coefs["structure"]
        batch = _batch(c, 3)
        L0 = np.zeros(batch + (m, m))
        L1 = np.zeros(batch + (m, m, n + r))
        if constants:
            _antisym_set(L0, X, PP, np.broadcast_to(np.eye(n), batch + (n, n)))
        if "x_xi" in coefs:
            _antisym_set(L0, X, XI, coefs["x_xi"])
        if "pp" in coefs:
            L0[..., n:2 * n, n:2 * n] = coefs["pp"]
        if "p_xi" in coefs:
            _antisym_set(L0, PP, XI, coefs["p_xi"])
        L1[..., 2 * n:, 2 * n:, n:] = np.moveaxis(c, -3, -1)
        return L0, L1

    labels = ([f"x{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]
              + [f"xi{a + 1}" for a in range(r)])
    return fiber_affine_structure(
        m, X, np.arange(n, m), coefficients, tensors, labels,
        name=f"whitney({algebroid.name})",
        blocks={"x": (0, n), "p": (n, 2 * n), "xi": (2 * n, m)},
    )


def adjoint_bundle_structure(conn: PrincipalConnection, lie_sign: float = -1.0) -> PoissonStructure:
    """Structure on ``T*M + (adjoint bundle)*`` with coordinates ``(x, p, mu)``.

    ``{x^i, p_j} = delta``, ``{p_i, p_j} = -B^c_{ij} mu_c``,
    ``{p_i, mu_a} = -C^d_{ca} A^c_i mu_d`` and
    ``{mu_a, mu_b} = lie_sign * C^c_{ab} mu_c``.

    With these two twisting blocks and ``B = dA + [A, A]`` the ``mu`` block
    must carry the minus Lie-Poisson sign (the default) for the Jacobi
    identity to hold once the algebra is non-abelian.  ``lie_sign=+1`` is
    only Poisson for abelian algebras; it is kept so that form can be
    inspected with :func:`check_jacobi`.
    """
    if lie_sign not in (1.0, -1.0):
        raise ConfigurationError("lie_sign must be +1 or -1", field="lie_sign")
    n, q = conn.n, conn.p
    m = 2 * n + q
    X, PP, MU = np.arange(n), np.arange(n, 2 * n), np.arange(2 * n, m)
    c = conn.algebra.constants
    # {mu_a, mu_b} coefficient of mu_c, indexed [a, b, c]
    lie = np.moveaxis(c, 0, -1) * float(lie_sign)

    def tensors(coefs, constants):
        A, B = coefs["A"], coefs["B"]
        batch = _batch(A, 2)
        L0 = np.zeros(batch + (m, m))
        L1 = np.zeros(batch + (m, m, n + q))
        if constants:
            _antisym_set(L0, X, PP, np.broadcast_to(np.eye(n), batch + (n, n)))
            L1[..., 2 * n:, 2 * n:, n:] = lie
        # [i, j, c] = -B^c_{ij}
        L1[..., n:2 * n, n:2 * n, n:] = -np.moveaxis(B, -3, -1)
        # [i, a, d] = -C^d_{ca} A^c_i
        pm = -np.einsum("dca,...ci->...iad", c, A)
        _antisym_set1(L1, PP, MU, _scatter_last(pm, np.arange(n, n + q), n + q))
        return L0, L1

    labels = ([f"x{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]
              + [f"mu{a + 1}" for a in range(q)])
    return fiber_affine_structure(
        m, X, np.arange(n, m), {"A": conn.A, "B": conn.curvature_field()}, tensors, labels,
        name=f"adjoint({conn.algebra.label}){'+' if lie_sign > 0 else ''}",
        blocks={"x": (0, n), "p": (n, 2 * n), "mu": (2 * n, m)},
    )


def _gl_bracket_tensor(n):
    """``{mu^i_j, mu^l_k}`` coefficients ``[i*n+j, l*n+k, u*n+v]``."""
    from .connection import gl

    return np.moveaxis(gl(n).constants, 0, -1)


def _twist_tensor(G, n):
    """``(G^p_{ki} delta^l_q - G^l_{qi} delta^p_k) mu^q_p`` as ``[..., i, l*n+k, u*n+v]``.

    ``G[..., h, k, i]`` holds ``A^h_{ki}``; the output row ``l*n+k`` is the
    coordinate ``mu^l_k`` and the last axis the coefficient of ``mu^u_v``.
    """
    eye = np.eye(n)
    first = np.einsum("ul,...vki->...ilkuv", eye, G)
    second = np.einsum("vk,...lui->...ilkuv", eye, G)
    out = first - second
    return out.reshape(out.shape[:-5] + (n, n * n, n * n))


def affine_refinement_structure(aff: AffineConnection) -> PoissonStructure:
    """Structure on ``T*M + (ga(n) adjoint bundle)*``, coordinates ``(x, p, mu^l_k, mu_l)``.

    Blocks for the affine group: ``{x^i, p_j} = delta``,
    ``{p_i, p_j} = -B^l_{kij} mu^k_l - B^l_{ij} mu_l``,
    ``{p_i, mu^l_k} = A^p_{ki} mu^l_p - A^l_{qi} mu^q_k - A^l_i mu_k``,
    ``{p_i, mu_k} = A^p_{ki} mu_p``, the ``gl(n)`` block on ``mu^.``, and
    ``{mu^i_k, mu_j} = delta^i_k mu_j``; every other block vanishes.
    The blocks are assembled verbatim; for a generic connection they violate
    the Jacobi identity, which :func:`check_jacobi` reports.
    """
    n = aff.n
    nn = n * n
    m = 2 * n + nn + n
    X, PP = np.arange(n), np.arange(n, 2 * n)
    MG, MT = np.arange(2 * n, 2 * n + nn), np.arange(2 * n + nn, m)
    fg, ft = np.arange(n, n + nn), np.arange(n + nn, n + nn + n)  # positions in fiber axis
    nf = n + nn + n
    gl_lie = _gl_bracket_tensor(n)
    eye = np.eye(n)
    # {mu^i_k, mu_j} = delta^i_k mu_j : [(i,k), j, j']
    mixed = np.einsum("ik,jJ->ikjJ", eye, eye).reshape(nn, n, n)
    B_gl, B_tr = aff.curvature_fields()

    def tensors(coefs, constants):
        G, T, Bg, Bt = coefs["gl"], coefs["tr"], coefs["B_gl"], coefs["B_tr"]
        batch = _batch(T, 2)
        L0 = np.zeros(batch + (m, m))
        L1 = np.zeros(batch + (m, m, nf))
        if constants:
            _antisym_set(L0, X, PP, np.broadcast_to(np.eye(n), batch + (n, n)))
            L1[..., MG[:, None, None], MG[None, :, None], fg[None, None, :]] = gl_lie
            _antisym_set1(L1, MG, MT, np.broadcast_to(
                _scatter_last(mixed, ft, nf), batch + (nn, n, nf)))
        # {p_i, p_j}: Bg[l, k, i, j] multiplies mu^k_l (flat k*n+l); Bt[l, i, j] mu_l
        pp = np.zeros(batch + (n, n, nf))
        pp[..., fg] = -np.einsum("...lkij->...ijkl", Bg).reshape(batch + (n, n, nn))
        pp[..., ft] = -np.moveaxis(Bt, -3, -1)
        L1[..., PP[:, None], PP[None, :], :] = pp
        # {p_i, mu^l_k}
        pg = np.zeros(batch + (n, nn, nf))
        pg[..., fg] = _twist_tensor(G, n)
        # - A^l_i mu_k : T[l, i]
        pg[..., ft] -= np.einsum("...li,kK->...ilkK", T, eye).reshape(batch + (n, nn, n))
        _antisym_set1(L1, PP, MG, pg)
        # {p_i, mu_k} = A^p_{ki} mu_p
        pt = np.zeros(batch + (n, n, nf))
        pt[..., ft] = np.einsum("...pki->...ikp", G)
        _antisym_set1(L1, PP, MT, pt)
        return L0, L1

    labels = ([f"x{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]
              + [f"mu^{u + 1}_{v + 1}" for u in range(n) for v in range(n)]
              + [f"mu_{l + 1}" for l in range(n)])
    return fiber_affine_structure(
        m, X, np.arange(n, m),
        {"gl": aff.gl_coeffs, "tr": aff.tr_coeffs, "B_gl": B_gl, "B_tr": B_tr},
        tensors, labels, name=f"affine-refinement(n={n})",
        blocks={"x": (0, n), "p": (n, 2 * n), "mu_gl": (2 * n, 2 * n + nn), "mu_tr": (2 * n + nn, m)},
    )


def _scatter_last(arr, positions, size):
    out = np.zeros(arr.shape[:-1] + (size,))
    out[..., positions] = arr
    return out


def gl_refinement_structure(data: GLRefinementData, q_lambda_coupling: bool = False) -> PoissonStructure:
    """Structure on ``T*(P/K) + (gl(n) adjoint bundle)*``, coordinates ``(x, q, p, lambda, mu)``.

    Blocks: ``{x^i, p_j} = {x^i, lambda_j} = delta``,
    ``{p_i, p_j} = -1/2 B^l_{kij} mu^k_l`` (``xx`` curvature),
    ``{p_i, lambda_j} = -1/2 B mu`` (``xq``), ``{lambda_i, lambda_j} = -1/2 B mu``
    (``qq``), ``{p_i, mu^l_k}`` and ``{lambda_i, mu^l_k}`` twisted by the
    ``x``- and ``q``-coefficients, and the ``gl(n)`` block.  Everything else,
    including every bracket with ``q``, vanishes.  As with
    :func:`affine_refinement_structure`, Jacobi violations are reported by
    :func:`check_jacobi`, not corrected.

    ``q_lambda_coupling=True`` replaces ``{x^i, lambda_j} = delta`` by
    ``{q^i, lambda_j} = delta``, pairing each position with its own momentum.
    """
    n = data.n
    nn = n * n
    m = 4 * n + nn
    X, Q = np.arange(n), np.arange(n, 2 * n)
    PP, LL, MU = np.arange(2 * n, 3 * n), np.arange(3 * n, 4 * n), np.arange(4 * n, m)
    fiber = np.arange(2 * n, m)
    fmu = np.arange(2 * n, 2 * n + nn)
    nf = 2 * n + nn
    gl_lie = _gl_bracket_tensor(n)

    def curv_block(Bc, batch):
        # Bc[l, k, i, j] multiplies mu^k_l  ->  [i, j, k*n+l]
        t = np.swapaxes(Bc, -4, -3).reshape(batch + (nn, n, n))
        out = np.zeros(batch + (n, n, nf))
        out[..., fmu] = -0.5 * np.moveaxis(t, -3, -1)
        return out

    def tensors(coefs, constants):
        Ax, Aq = coefs["x"], coefs["q"]
        batch = _batch(Ax, 3)
        L0 = np.zeros(batch + (m, m))
        L1 = np.zeros(batch + (m, m, nf))
        if constants:
            ident = np.broadcast_to(np.eye(n), batch + (n, n))
            _antisym_set(L0, X, PP, ident)
            _antisym_set(L0, Q if q_lambda_coupling else X, LL, ident)
            L1[..., MU[:, None, None], MU[None, :, None], fmu[None, None, :]] = gl_lie
        L1[..., PP[:, None], PP[None, :], :] = curv_block(coefs["xx"], batch)
        L1[..., LL[:, None], LL[None, :], :] = curv_block(coefs["qq"], batch)
        _antisym_set1(L1, PP, LL, curv_block(coefs["xq"], batch))
        tw = np.zeros(batch + (n, nn, nf))
        tw[..., fmu] = _twist_tensor(Ax, n)
        _antisym_set1(L1, PP, MU, tw)
        tw = np.zeros(batch + (n, nn, nf))
        tw[..., fmu] = _twist_tensor(Aq, n)
        _antisym_set1(L1, LL, MU, tw)
        return L0, L1

    labels = ([f"x{i + 1}" for i in range(n)] + [f"q{i + 1}" for i in range(n)]
              + [f"p{i + 1}" for i in range(n)] + [f"lambda{i + 1}" for i in range(n)]
              + [f"mu^{u + 1}_{v + 1}" for u in range(n) for v in range(n)])
    return fiber_affine_structure(
        m, np.arange(2 * n), fiber,
        {"x": data.x_coeffs, "q": data.q_coeffs, "xx": data.curv_xx, "qq": data.curv_qq,
         "xq": data.curv_xq},
        tensors, labels,
        name=f"gl-refinement(n={n}){'-q-coupled' if q_lambda_coupling else ''}",
        blocks={"x": (0, n), "q": (n, 2 * n), "p": (2 * n, 3 * n), "lambda": (3 * n, 4 * n),
                "mu": (4 * n, m)},
    )
