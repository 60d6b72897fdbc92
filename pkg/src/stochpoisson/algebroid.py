"""Lie algebroids in a chart, given by their structure functions.

Convention: ``anchor[i, alpha] = b^i_alpha`` (so ``b(e_alpha) = b^i_alpha d_i``)
and ``structure[gamma, alpha, beta] = C^gamma_{alpha beta}`` with
``[e_alpha, e_beta] = C^gamma_{alpha beta} e_gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, StructureError
from .geometry import (
    ScalarField,
    TensorField,
    as_points,
    as_tensor_field,
    flat_points,
)

ANTISYMMETRY_TOL = 1e-12


class LieAlgebroid:
    """Structure functions ``(b^i_alpha, C^gamma_{alpha beta})`` of rank ``r`` over ``R^n``.

    The structure tensor is antisymmetrised on evaluation when the violation
    is below ``1e-12`` and rejected otherwise.  Compatibility of the
    structure functions is *not* enforced; see :func:`check_compatibility`.
    """

    def __init__(self, n, r, anchor, structure, name="A", probes=None):
        self.n, self.r = int(n), int(r)
        self.name = name
        anchor = as_tensor_field(anchor, self.n, (self.n, self.r), name="anchor")
        raw = as_tensor_field(structure, self.n, (self.r, self.r, self.r), name="structure")
        self.anchor = anchor
        self.raw_structure = raw
        self.structure = _AntisymmetricField(raw)
        if probes is None:
            rng = np.random.default_rng(0)
            probes = np.vstack([np.zeros(self.n), rng.standard_normal((4, self.n))])
        # fail fast on an obviously non-antisymmetric table
        self.structure(flat_points(probes, self.n))

    @property
    def dual_dim(self):
        return self.n + self.r

    def __repr__(self):
        return f"LieAlgebroid({self.name!r}, n={self.n}, r={self.r})"


class _AntisymmetricField(TensorField):
    def __init__(self, raw):
        self.raw = raw
        super().__init__(raw.dim, raw.shape, self._value, name=raw.name,
                         noise_level=raw.noise_level)

    def _value(self, x):
        c = self.raw._evaluate(x)
        violation = np.max(np.abs(c + np.swapaxes(c, -1, -2)), initial=0.0)
        if violation > ANTISYMMETRY_TOL:
            raise StructureError(
                f"structure functions not antisymmetric in lower indices (violation {violation:.3g})"
            )
        return 0.5 * (c - np.swapaxes(c, -1, -2))

    @property
    def has_derivative(self):
        return self.raw.has_derivative

    def derivative(self):
        d = self.raw.derivative()
        return TensorField(
            d.dim, d.shape,
            lambda x: 0.5 * (d._evaluate(x) - np.swapaxes(d._evaluate(x), -2, -3)),
            name=f"d[{self.name}]", noise_level=d.noise_level,
        )


def tangent_algebroid(n: int) -> LieAlgebroid:
    """``TM`` itself: identity anchor, vanishing brackets of coordinate fields."""
    return LieAlgebroid(n, n, np.eye(n), np.zeros((n, n, n)), name=f"T R^{n}")


def lie_algebra_algebroid(constants, n: int = 0) -> LieAlgebroid:
    """A Lie algebra seen as an algebroid with zero anchor over ``R^n``."""
    c = np.asarray(constants, dtype=float)
    r = c.shape[0]
    return LieAlgebroid(n, r, np.zeros((n, r)), c, name="g")


@dataclass(frozen=True)
class Section:
    """Section ``a = a^alpha e_alpha``; ``components`` is an ``(r,)`` field on the base."""

    components: TensorField

    @classmethod
    def of(cls, algebroid: LieAlgebroid, components) -> "Section":
        return cls(as_tensor_field(components, algebroid.n, (algebroid.r,), name="section"))

    def __call__(self, x):
        return self.components(x)


def _section(algebroid, a):
    if not isinstance(a, Section):
        a = Section.of(algebroid, a)
    if a.components.dim != algebroid.n or a.components.shape != (algebroid.r,):
        raise ConfigurationError("section does not match algebroid dimensions", field="section")
    return a


@dataclass(frozen=True)
class CompatibilityReport:
    """Per-sample maxima of the anchor-homomorphism and Jacobi residuals."""

    anchor: np.ndarray
    jacobi: np.ndarray

    def max(self):
        return float(max(np.max(self.anchor, initial=0.0), np.max(self.jacobi, initial=0.0)))

    def passed(self, tol):
        return self.max() <= tol


def check_compatibility(algebroid: LieAlgebroid, samples) -> CompatibilityReport:
    """Residuals of the PDEs the structure functions must satisfy.

    anchor:  ``b^j_a d_j b^i_b - b^j_b d_j b^i_a - C^g_{ab} b^i_g``
    Jacobi:  cyclic sum over ``(a, b, g)`` of ``b^i_a d_i C^d_{bg} + C^d_{ae} C^e_{bg}``
    """
    x = flat_points(samples, algebroid.n)
    b = algebroid.anchor(x)
    db = algebroid.anchor.jacobian(x)
    c = algebroid.structure(x)
    dc = algebroid.structure.jacobian(x)

    hom = np.einsum("sja,sibj->siab", b, db)
    hom = hom - np.swapaxes(hom, -1, -2) - np.einsum("sgab,sig->siab", c, b)

    t = np.einsum("sia,sdbgi->sdabg", b, dc) + np.einsum("sdae,sebg->sdabg", c, c)
    jac = t + np.einsum("sdbga->sdabg", t) + np.einsum("sdgab->sdabg", t)

    def per_sample(arr):
        return np.max(np.abs(arr).reshape(len(x), -1), axis=1, initial=0.0)

    return CompatibilityReport(per_sample(hom), per_sample(jac))


def fiber_linear_function(algebroid: LieAlgebroid, a) -> ScalarField:
    """``f_a(x, xi) = a^alpha(x) xi_alpha`` on the dual bundle, with gradient."""
    a = _section(algebroid, a)
    n, r = algebroid.n, algebroid.r
    comp = a.components
    dcomp = comp.derivative()

    def value(z):
        return np.einsum("...a,...a->...", comp._evaluate(z[..., :n]), z[..., n:])

    def grad(z):
        x, xi = z[..., :n], z[..., n:]
        base = np.einsum("...aj,...a->...j", dcomp._evaluate(x), xi)
        return np.concatenate([base, comp._evaluate(x)], axis=-1)

    return ScalarField(n + r, value, grad=grad, name=f"f[{comp.name}]",
                       noise_level=dcomp.noise_level if not comp.has_derivative else 0)


def hamiltonian_field_of_section(algebroid: LieAlgebroid, a, z) -> np.ndarray:
    """Hamiltonian vector field of ``f_a`` in closed form.

    Base part ``b^i_beta a^beta``; fiber part
    ``(a^gamma C^lambda_{beta gamma} - b^j_beta d_j a^lambda) xi_lambda``.
    """
    a = _section(algebroid, a)
    n = algebroid.n
    z = as_points(z, algebroid.dual_dim)
    x, xi = z[..., :n], z[..., n:]
    b = algebroid.anchor(x)
    c = algebroid.structure(x)
    av = a.components(x)
    da = a.components.jacobian(x)
    base = np.einsum("...ib,...b->...i", b, av)
    twist = np.einsum("...g,...lbg->...bl", av, c) - np.einsum("...jb,...lj->...bl", b, da)
    fiber = np.einsum("...bl,...l->...b", twist, xi)
    return np.concatenate([base, fiber], axis=-1)


def bracket_sections(algebroid: LieAlgebroid, a, b) -> Section:
    """``[a, b]^g = C^g_{ab} a^a b^b + b(a)(b^g) - b(b)(a^g)``."""
    a, b = _section(algebroid, a), _section(algebroid, b)
    ca, cb = a.components, b.components

    def value(x):
        anc = algebroid.anchor._evaluate(x)
        av, bv = ca._evaluate(x), cb._evaluate(x)
        out = np.einsum("...gab,...a,...b->...g", algebroid.structure._evaluate(x), av, bv)
        out = out + np.einsum("...ia,...a,...gi->...g", anc, av, cb.jacobian(x))
        return out - np.einsum("...ib,...b,...gi->...g", anc, bv, ca.jacobian(x))

    return Section(TensorField(algebroid.n, (algebroid.r,), value, name="[a,b]"))
