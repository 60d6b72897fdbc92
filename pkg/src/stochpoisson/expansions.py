"""Expanded coordinate forms of the stochastic equations, audited term by term.

Each ``kind`` builds its Poisson structure, fiber-linear noise Hamiltonians
and drift Hamiltonian, and compiles them with :func:`stochpoisson.sde.compile`;
those coefficients are the ones returned.  Alongside, the coordinate
expansions that are commonly quoted for each structure are kept as lists of
:class:`LiteralTerm` objects and evaluated verbatim at sample points.  The
:class:`AuditReport` pairs every literal term with the matching piece of the
compiled coefficients and records each disagreement.

Matching works per block: a term tagged with block ``J`` on line ``dz^I`` is
compared with ``Lambda[I, J] d_J g`` (``g = h`` for drift, ``f_s`` for
diffusion).  Untagged terms of a line are compared together against the
rest of that line.  Literal double brackets carry no factor 1/2, so the
correction part is compared with ``sum_s {{z^I, f_s}, f_s}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Callable, Dict, List, Optional

import numpy as np

from .algebroid import LieAlgebroid
from .connection import AffineConnection, GLRefinementData, PrincipalConnection
from .errors import ConfigurationError
from .geometry import ScalarField, TensorField, as_scalar_field, as_tensor_field, fd_gradient
from .poisson import (
    PoissonStructure,
    adjoint_bundle_structure,
    affine_refinement_structure,
    from_algebroid,
    gl_refinement_structure,
    whitney_sum_structure,
)
from .sde import CompiledDynamics, StochasticHamiltonianSystem, compile

KINDS = ("algebroid_dual", "whitney_sum", "adjoint_bundle", "affine_refinement", "gl_refinement")
PARTS = ("drift", "correction", "diffusion")


@dataclass(frozen=True)
class LiteralTerm:
    """One term of an expanded equation.

    ``evaluate(ctx)`` returns ``(N, |I|)`` (drift, correction) or
    ``(N, |I|, r)`` (diffusion); ``None`` marks a term whose free indices do
    not match its line, which cannot be evaluated as written.
    """

    line: str
    part: str
    text: str
    block: Optional[str] = None
    evaluate: Optional[Callable] = None
    note: str = ""


@dataclass
class AuditRecord:
    kind: str
    line: str
    part: str
    term: str
    status: str  # ok | mismatch | omitted | not-evaluable
    canonical: Optional[list] = None
    literal: Optional[list] = None
    delta: float = 0.0
    relative: float = 0.0
    note: str = ""

    @property
    def flagged(self):
        return self.status != "ok"

    def to_dict(self):
        return {
            "kind": self.kind, "line": self.line, "part": self.part, "term": self.term,
            "status": self.status, "canonical": self.canonical, "literal": self.literal,
            "delta": self.delta, "relative": self.relative, "note": self.note,
        }


@dataclass
class AuditReport:
    kind: str
    tol: float
    n_points: int
    records: List[AuditRecord] = field(default_factory=list)
    literal: Dict[tuple, np.ndarray] = field(default_factory=dict, repr=False)
    canonical: Dict[tuple, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def flagged(self) -> List[AuditRecord]:
        return [r for r in self.records if r.flagged]

    @property
    def empty(self) -> bool:
        return not self.flagged

    def line_error(self, line, part):
        """Max relative error between literal and compiled totals of one line."""
        c, lit = self.canonical[(line, part)], self.literal[(line, part)]
        return float(np.max(np.abs(c - lit) / np.maximum(1.0, np.abs(c)), initial=0.0))

    def to_dict(self):
        return {
            "kind": self.kind, "tolerance": self.tol, "points": self.n_points,
            "flagged": len(self.flagged),
            "records": [r.to_dict() for r in self.records],
        }


@dataclass
class ExpansionSpec:
    kind: str
    system: StochasticHamiltonianSystem
    literal_structure: PoissonStructure
    blocks: Dict[str, np.ndarray]
    lines: Dict[str, str]
    terms: List[LiteralTerm]
    context: Callable
    sampler: Callable


# ----------------------------------------------------------------------------
# fiber-linear functions with exact gradients and Hessians


def fiber_linear(m, base, fiber, coef, name="f") -> ScalarField:
    """``sum_c coef_c(x) w_c`` with ``x = z[base]``, ``w = z[fiber]``.

    ``coef`` is a ``(len(fiber),)`` field on the base.  Gradient and Hessian
    are assembled from the coefficient derivatives.
    """
    base, fiber = np.asarray(base), np.asarray(fiber)
    dc = coef.derivative()
    ddc = dc.derivative()

    def value(z):
        return np.einsum("...c,...c->...", coef._evaluate(z[..., base]), z[..., fiber])

    def grad(z):
        x, w = z[..., base], z[..., fiber]
        out = np.zeros(z.shape)
        out[..., base] = np.einsum("...ck,...c->...k", dc._evaluate(x), w)
        out[..., fiber] = coef._evaluate(x)
        return out

    def hessian(z):
        x, w = z[..., base], z[..., fiber]
        out = np.zeros(z.shape + (m,))
        out[..., base[:, None], base[None, :]] = np.einsum("...ckl,...c->...kl", ddc._evaluate(x), w)
        cross = dc._evaluate(x)  # [c, k]
        out[..., fiber[:, None], base[None, :]] = cross
        out[..., base[:, None], fiber[None, :]] = np.swapaxes(cross, -1, -2)
        return out

    g = TensorField(m, (m,), grad, derivative=hessian, name=f"grad[{name}]")
    return ScalarField(m, value, grad=g, name=name)


def _noise_coefficients(dim, parts, name):
    """Concatenate per-block coefficient fields into one field on the base."""
    fields = [as_tensor_field(f, dim, (k,), name=f"{name}[{i}]") for i, (f, k) in enumerate(parts)]
    sizes = [k for _, k in parts]
    total = sum(sizes)

    def value(x):
        return np.concatenate([f._evaluate(x) for f in fields], axis=-1)

    def make_derivative(order):
        ds = fields
        for _ in range(order):
            ds = [f.derivative() for f in ds]
        return ds

    d1, d2 = make_derivative(1), make_derivative(2)
    second = TensorField(dim, (total, dim, dim),
                         lambda x: np.concatenate([f._evaluate(x) for f in d2], axis=-3))
    first = TensorField(dim, (total, dim),
                        lambda x: np.concatenate([f._evaluate(x) for f in d1], axis=-2),
                        derivative=second)
    return TensorField(dim, (total,), value, derivative=first, name=name)


def _derivs(field, x, order=2):
    out = [field._evaluate(x)]
    d = field
    for _ in range(order):
        d = d.derivative()
        out.append(d._evaluate(x))
    return out


def _stack(fields, x, order=2):
    """Evaluate a list of fields and their derivatives, stacked on axis 1."""
    if not fields:
        return [None] * (order + 1)
    cols = [_derivs(f, x, order) for f in fields]
    return [np.stack([c[k] for c in cols], axis=1) for k in range(order + 1)]


def _sampler(m, scale=1.0):
    def sample(rng, n):
        return scale * rng.standard_normal((n, m))

    return sample


def _h_blocks(h, z, blocks):
    g = fd_gradient(h, z)
    return {name: g[..., idx] for name, idx in blocks.items()}


def _nested(structure, f, idx):
    """Literal double bracket ``{{z^I, f}, f}`` for the coordinates ``idx``."""
    sys = StochasticHamiltonianSystem(structure, 0.0, [f])
    dyn = compile(sys, half=False)
    return lambda ctx: dyn.correction(ctx.z)[..., idx]


def _hamiltonian_column(structure, f, idx):
    sys = StochasticHamiltonianSystem(structure, 0.0, [f])
    dyn = compile(sys)
    return lambda ctx: dyn.diffusion(ctx.z)[..., idx, :]


# ----------------------------------------------------------------------------
# Lie algebroid dual: coordinates (x, xi)


def _algebroid_dual(inputs):
    A: LieAlgebroid = inputs["algebroid"]
    n, r = A.n, A.r
    m = n + r
    X, XI = np.arange(n), np.arange(n, m)
    sections = [as_tensor_field(a, n, (r,), name=f"a_{s + 1}")
                for s, a in enumerate(inputs.get("sections", []))]
    P = from_algebroid(A)
    h = as_scalar_field(inputs["h"], m)
    noise = [fiber_linear(m, X, XI, a, name=f"f_{s + 1}") for s, a in enumerate(sections)]
    blocks = {"x": X, "xi": XI}

    def context(z):
        x, xi = z[..., X], z[..., XI]
        b, db = _derivs(A.anchor, x, 1)
        a, da, dda = _stack(sections, x)
        if a is None:
            a = np.zeros(z.shape[:-1] + (0, r))
            da = np.zeros(a.shape + (n,))
            dda = np.zeros(da.shape + (n,))
        return SimpleNamespace(z=z, x=x, xi=xi, b=b, db=db, C=A.structure._evaluate(x),
                               a=a, da=da, dda=dda, h=_h_blocks(h, z, blocks))

    def dx_corr(c):
        v = np.einsum("...kl,...sl->...sk", c.b, c.a)
        dv = np.einsum("...ibk,...sb->...sik", c.db, c.a) + np.einsum("...ib,...sbk->...sik", c.b, c.da)
        return np.einsum("...sk,...sik->...i", v, dv)

    def dxi_corr1(c):
        inner = (np.einsum("...iaj,...sgi->...sgaj", c.db, c.da)
                 + np.einsum("...ia,...sgij->...sgaj", c.b, c.dda))
        t = np.einsum("...jg,...sgaj->...sa", c.b, inner)
        return np.einsum("...sa,...s->...a", t, np.einsum("...se,...e->...s", c.a, c.xi))

    terms = [
        LiteralTerm("dx", "drift", "b^i_a dh/dxi_a", "xi",
                    lambda c: np.einsum("...ia,...a->...i", c.b, c.h["xi"])),
        LiteralTerm("dx", "correction", "delta^{su} b^k_l a_s^l d/dx^k (b^i_b a_u^b)", None, dx_corr),
        LiteralTerm("dx", "diffusion", "b^i_b a_s^b", "xi",
                    lambda c: np.einsum("...ib,...sb->...is", c.b, c.a)),
        LiteralTerm("dxi", "drift", "b^i_a dh/dx^i", "x",
                    lambda c: np.einsum("...ia,...i->...a", c.b, c.h["x"])),
        LiteralTerm("dxi", "drift", "C^g_{ab} xi_g dh/dxi_b", "xi",
                    lambda c: np.einsum("...gab,...g,...b->...a", c.C, c.xi, c.h["xi"])),
        LiteralTerm("dxi", "correction",
                    "delta^{su} b^j_g d/dx^j (b^i_a da_u^g/dx^i) a_s^e xi_e", None, dxi_corr1),
        LiteralTerm("dxi", "correction", "delta^{su} C^e_{tg} b^i_a da_u^t/dx^i a_s^g xi_e", None,
                    lambda c: np.einsum("...etg,...ia,...sti,...sg,...e->...a",
                                        c.C, c.b, c.da, c.a, c.xi)),
        LiteralTerm("dxi", "diffusion", "b^i_a da_s^l/dx^i xi_l", "x",
                    lambda c: np.einsum("...ia,...sli,...l->...as", c.b, c.da, c.xi)),
        LiteralTerm("dxi", "diffusion", "C^g_{am} a_s^m xi_g", "xi",
                    lambda c: np.einsum("...gam,...sm,...g->...as", c.C, c.a, c.xi)),
    ]
    return ExpansionSpec("algebroid_dual", StochasticHamiltonianSystem(P, h, noise), P, blocks,
                         {"dx": "x", "dxi": "xi"}, terms, context, _sampler(m))


# ----------------------------------------------------------------------------
# Whitney sum T*M + A*: coordinates (x, p, xi)


def _whitney_sum(inputs):
    A: LieAlgebroid = inputs["algebroid"]
    n, r = A.n, A.r
    m = 2 * n + r
    X, PP, XI = np.arange(n), np.arange(n, 2 * n), np.arange(2 * n, m)
    k_pp = as_tensor_field(inputs.get("k_pp", np.zeros((n, n))), n, (n, n), name="k_pp")
    k_pxi = as_tensor_field(inputs.get("k_pxi", np.zeros((n, r))), n, (n, r), name="k_pxi")
    k_xixi = as_tensor_field(inputs.get("k_xixi", np.zeros((r, r))), n, (r, r), name="k_xixi")
    a_list = [as_tensor_field(a, n, (r,), name=f"a_{s + 1}") for s, a in enumerate(inputs.get("a", []))]
    d_list = [as_tensor_field(d, n, (n,), name=f"d_{s + 1}") for s, d in enumerate(inputs.get("d", []))]
    if len(a_list) != len(d_list):
        raise ConfigurationError("one d_s per a_s required", field="d")
    P = whitney_sum_structure(A, x_xi="anchor")
    h = _quadratic_hamiltonian(m, X, PP, XI, k_pp, k_pxi, k_xixi)
    noise = [fiber_linear(m, X, np.concatenate([PP, XI]),
                          _noise_coefficients(n, [(d, n), (a, r)], name=f"g_{s + 1}"),
                          name=f"g_{s + 1}")
             for s, (a, d) in enumerate(zip(a_list, d_list))]
    blocks = {"x": X, "p": PP, "xi": XI}

    def context(z):
        x = z[..., X]
        b, db = _derivs(A.anchor, x, 1)
        a, da, dda = _stack(a_list, x)
        d, dd, ddd = _stack(d_list, x)
        if a is None:
            a = np.zeros(z.shape[:-1] + (0, r))
            da, dda = np.zeros(a.shape + (n,)), np.zeros(a.shape + (n, n))
            d = np.zeros(z.shape[:-1] + (0, n))
            dd, ddd = np.zeros(d.shape + (n,)), np.zeros(d.shape + (n, n))
        c = SimpleNamespace(z=z, x=x, p=z[..., PP], xi=z[..., XI], b=b, db=db,
                            C=A.structure._evaluate(x),
                            Kpp=k_pp._evaluate(x), dKpp=k_pp.derivative()._evaluate(x),
                            Kpx=k_pxi._evaluate(x), dKpx=k_pxi.derivative()._evaluate(x),
                            Kxx=k_xixi._evaluate(x), dKxx=k_xixi.derivative()._evaluate(x),
                            a=a, da=da, dda=dda, d=d, dd=dd, ddd=ddd)
        # total base velocity of each noise: d_s + b a_s
        c.V = c.d + np.einsum("...ja,...sa->...sj", b, a)
        # d_i f_s and d_i d_l f_s
        c.Fx = np.einsum("...sbi,...b->...si", da, c.xi) + np.einsum("...sji,...j->...si", dd, c.p)
        c.Fxx = (np.einsum("...sbil,...b->...sil", dda, c.xi)
                 + np.einsum("...sjil,...j->...sil", ddd, c.p))
        return c

    def dx_corr(c):
        dV = (c.dd + np.einsum("...iaj,...sa->...sij", c.db, c.a)
              + np.einsum("...ia,...saj->...sij", c.b, c.da))
        return np.einsum("...sj,...sij->...i", c.V, dV)

    def dp_corr2(c):
        inner = (np.einsum("...sal,...a->...sl", c.da, c.xi)
                 + np.einsum("...sil,...i->...sl", c.dd, c.p))
        return np.einsum("...slj,...sl->...j", c.dd, inner)

    def dxi_drift(c):
        inner = (0.5 * np.einsum("...hli,...h,...l->...i", c.dKpp, c.p, c.p)
                 + np.einsum("...gbi,...g,...b->...i", c.dKxx, c.xi, c.xi)
                 + 0.5 * np.einsum("...jbi,...j,...b->...i", c.dKpx, c.p, c.xi))
        return -np.einsum("...ia,...i->...a", c.b, inner)

    def dxi_corr1(c):
        dY = (np.einsum("...ial,...si->...sal", c.db, c.Fx)
              + np.einsum("...ia,...sil->...sal", c.b, c.Fxx))
        return -np.einsum("...sl,...sal->...a", c.V, dY)

    def dxi_corr2(c):
        w = np.swapaxes(c.dd, -1, -2) + np.einsum("...lg,...sgi->...sil", c.b, c.da)
        return np.einsum("...ia,...sil,...sl->...a", c.b, w, c.Fx)

    terms = [
        LiteralTerm("dx", "drift", "(k^{ij} + b^i_a k^{ja}) p_j", None,
                    lambda c: np.einsum("...ij,...j->...i", c.Kpp, c.p)
                    + np.einsum("...ia,...ja,...j->...i", c.b, c.Kpx, c.p)),
        LiteralTerm("dx", "drift", "(k^{ib} + b^i_a k^{ab}) p_b", None,
                    lambda c: np.einsum("...ib,...b->...i", c.Kpx, c.xi)
                    + np.einsum("...ia,...ab,...b->...i", c.b, c.Kxx, c.xi),
                    note="p_b has an algebroid index; evaluated as xi_b"),
        LiteralTerm("dx", "correction", "delta^{su} (d_u^j + b^j_a a_u^a) d/dx^j (a_s^i + b^i_a a_s^a)",
                    None, dx_corr,
                    note="a_s^i is not among the noise coefficients; evaluated as d_s^i"),
        LiteralTerm("dx", "diffusion", "d_s^i + b^i_a a_s^a", None,
                    lambda c: np.swapaxes(c.V, -1, -2)),
        LiteralTerm("dp", "drift", "-1/2 dk^{hl}/dx^j p_h p_l", None,
                    lambda c: -0.5 * np.einsum("...hlj,...h,...l->...j", c.dKpp, c.p, c.p)),
        LiteralTerm("dp", "correction",
                    "-delta^{us} (b^m_a a_u^a + d_u^m)(d2a_s^g/dx^m dx^j xi_g + d2d_s^i/dx^m dx^j p_i)",
                    None, lambda c: -np.einsum("...sm,...smj->...j", c.V, np.swapaxes(c.Fxx, -1, -2))),
        LiteralTerm("dp", "correction",
                    "+delta^{su} dd_s^a/dx^j (da_u^a/dx^l xi_a + dd_u^i/dx^l p_i)", None, dp_corr2,
                    note="dd_s^a/dx^j evaluated as dd_s^l/dx^j so that l is summed"),
        LiteralTerm("dp", "diffusion", "da_s^a/dx^j xi_a + dd_s^i/dx^j p_i", None,
                    lambda c: np.swapaxes(c.Fx, -1, -2)),
        LiteralTerm("dxi", "drift",
                    "-b^i_a (1/2 dk^{hl}/dx^i p_h p_l + dk^{ab}/dx^i xi_a xi_b + 1/2 dk^{jb}/dx^i p_j xi_b)",
                    None, dxi_drift,
                    note="repeated a in dk^{ab} xi_a xi_b treated as a separate dummy index"),
        LiteralTerm("dxi", "correction",
                    "-delta^{us} (b^l_b a_u^b + d_u^l) d/dx^l (b^i_a da_s^b/dx^i xi_b + b^i_a dd_s^j/dx^i p_j)",
                    None, dxi_corr1),
        LiteralTerm("dxi", "correction",
                    "+delta^{su} b^i_a (dd_s^l/dx^i + b^l_g da_s^g/dx^i)(da_u^m/dx^l xi_m + dd_s^j/dx^i p_j)",
                    None, dxi_corr2,
                    note="dd_s^j/dx^i p_j evaluated as dd_u^j/dx^l p_j"),
        LiteralTerm("dxi", "diffusion", "-b^i_a (da_s^b/dx^i xi_b + dd_s^j/dx^i p_j)", None,
                    lambda c: -np.einsum("...ia,...si->...as", c.b, c.Fx)),
    ]
    return ExpansionSpec("whitney_sum", StochasticHamiltonianSystem(P, h, noise), P, blocks,
                         {"dx": "x", "dp": "p", "dxi": "xi"}, terms, context, _sampler(m))


def _quadratic_hamiltonian(m, X, PP, XI, k_pp, k_pxi, k_xixi) -> ScalarField:
    """``1/2 k^{ij} p_i p_j + k^{ia} p_i xi_a + 1/2 k^{ab} xi_a xi_b`` with exact gradient."""

    def parts(z):
        x, p, xi = z[..., X], z[..., PP], z[..., XI]
        return x, p, xi, k_pp._evaluate(x), k_pxi._evaluate(x), k_xixi._evaluate(x)

    def value(z):
        _, p, xi, kpp, kpx, kxx = parts(z)
        return (0.5 * np.einsum("...ij,...i,...j->...", kpp, p, p)
                + np.einsum("...ia,...i,...a->...", kpx, p, xi)
                + 0.5 * np.einsum("...ab,...a,...b->...", kxx, xi, xi))

    def grad(z):
        x, p, xi, kpp, kpx, kxx = parts(z)
        out = np.zeros(z.shape)
        out[..., X] = (0.5 * np.einsum("...ijk,...i,...j->...k", k_pp.derivative()._evaluate(x), p, p)
                       + np.einsum("...iak,...i,...a->...k", k_pxi.derivative()._evaluate(x), p, xi)
                       + 0.5 * np.einsum("...abk,...a,...b->...k",
                                         k_xixi.derivative()._evaluate(x), xi, xi))
        out[..., PP] = 0.5 * np.einsum("...ij,...j->...i", kpp + np.swapaxes(kpp, -1, -2), p) \
            + np.einsum("...ia,...a->...i", kpx, xi)
        out[..., XI] = np.einsum("...ia,...i->...a", kpx, p) \
            + 0.5 * np.einsum("...ab,...b->...a", kxx + np.swapaxes(kxx, -1, -2), xi)
        return out

    return ScalarField(m, value, grad=grad, name="h")


# ----------------------------------------------------------------------------
# adjoint bundle: coordinates (x, p, mu)


def _adjoint_bundle(inputs):
    conn: PrincipalConnection = inputs["connection"]
    n, q = conn.n, conn.p
    m = 2 * n + q
    X, PP, MU = np.arange(n), np.arange(n, 2 * n), np.arange(2 * n, m)
    a = as_tensor_field(inputs.get("a", np.zeros(n)), n, (n,), name="a")
    d = as_tensor_field(inputs.get("d", np.zeros(q)), n, (q,), name="d")
    P = adjoint_bundle_structure(conn)
    literal = adjoint_bundle_structure(conn, lie_sign=1.0)
    h = as_scalar_field(inputs["h"], m)
    f = fiber_linear(m, X, np.concatenate([PP, MU]), _noise_coefficients(n, [(a, n), (d, q)], "f"),
                     name="f")
    blocks = {"x": X, "p": PP, "mu": MU}
    C = conn.algebra.constants
    curv = conn.curvature_field()

    def context(z):
        x = z[..., X]
        av, dav = _derivs(a, x, 1)
        return SimpleNamespace(z=z, x=x, p=z[..., PP], mu=z[..., MU], A=conn.A._evaluate(x),
                               B=curv._evaluate(x), a=av, da=dav, d=d._evaluate(x),
                               h=_h_blocks(h, z, blocks))

    terms = [
        LiteralTerm("dx", "drift", "dh/dx^i", "p", lambda c: c.h["x"]),
        LiteralTerm("dx", "correction", "da^i/dx^l a^l", None,
                    lambda c: np.einsum("...il,...l->...i", c.da, c.a)),
        LiteralTerm("dx", "diffusion", "a^i", "p", lambda c: c.a[..., None]),
        LiteralTerm("dp", "drift", "-dh/dx^i", "x", lambda c: -c.h["x"]),
        LiteralTerm("dp", "drift", "-B^c_{ij} mu_c dh/dp_j", "p",
                    lambda c: -np.einsum("...cij,...c,...j->...i", c.B, c.mu, c.h["p"])),
        LiteralTerm("dp", "drift", "-C^d_{ca} mu_a A^c_i dh/dmu_a", "mu",
                    lambda c: -np.einsum("dca,...d,...ci,...a->...i", C, c.mu, c.A, c.h["mu"]),
                    note="mu_a evaluated as mu_d so that d is summed"),
        LiteralTerm("dp", "correction", "{{p_i, f}, f}", None, _nested(literal, f, PP)),
        LiteralTerm("dp", "diffusion", "-B^c_{ij} mu_c a^j", "p",
                    lambda c: -np.einsum("...cij,...c,...j->...i", c.B, c.mu, c.a)[..., None]),
        LiteralTerm("dp", "diffusion", "-C^d_{ca} mu_d A^c_i d^a", "mu",
                    lambda c: -np.einsum("dca,...d,...ci,...a->...i", C, c.mu, c.A, c.d)[..., None]),
        LiteralTerm("dmu", "drift", "C^d_{ca} mu_d A^c_j dh/dp_j", "p",
                    lambda c: np.einsum("dca,...d,...cj,...j->...a", C, c.mu, c.A, c.h["p"])),
        LiteralTerm("dmu", "drift", "C^c_{ab} mu_c dh/dmu_b", "mu",
                    lambda c: np.einsum("cab,...c,...b->...a", C, c.mu, c.h["mu"])),
        LiteralTerm("dmu", "correction", "{{mu_a, f}, f}", None, _nested(literal, f, MU)),
        LiteralTerm("dmu", "diffusion", "C^d_{ca} mu_d A^c_j a^j", "p",
                    lambda c: np.einsum("dca,...d,...cj,...j->...a", C, c.mu, c.A, c.a)[..., None]),
        LiteralTerm("dmu", "diffusion", "C^c_{ab} mu_c d^b", "mu",
                    lambda c: np.einsum("cab,...c,...b->...a", C, c.mu, c.d)[..., None]),
    ]
    return ExpansionSpec("adjoint_bundle", StochasticHamiltonianSystem(P, h, [f]), literal, blocks,
                         {"dx": "x", "dp": "p", "dmu": "mu"}, terms, context, _sampler(m))


# ----------------------------------------------------------------------------
# affine refinement: coordinates (x, p, mu^l_k, mu_l)


def _affine_refinement(inputs):
    aff: AffineConnection = inputs["affine"]
    n = aff.n
    nn = n * n
    m = 2 * n + nn + n
    X, PP = np.arange(n), np.arange(n, 2 * n)
    MG, MT = np.arange(2 * n, 2 * n + nn), np.arange(2 * n + nn, m)
    a = as_tensor_field(inputs.get("a", np.zeros(n)), n, (n,), name="a")
    # d[l, k] multiplies mu^l_k
    d = as_tensor_field(inputs.get("d", np.zeros((n, n))), n, (n, n), name="d")
    g = as_tensor_field(inputs.get("g", np.zeros(n)), n, (n,), name="g")
    d_flat = TensorField(n, (nn,), lambda x: d._evaluate(x).reshape(x.shape[:-1] + (nn,)),
                         derivative=lambda x: d.derivative()._evaluate(x).reshape(
                             x.shape[:-1] + (nn, n)), name="d")
    P = affine_refinement_structure(aff)
    h = as_scalar_field(inputs["h"], m)
    f = fiber_linear(m, X, np.arange(n, m),
                     _noise_coefficients(n, [(a, n), (d_flat, nn), (g, n)], "f"), name="f")
    blocks = {"x": X, "p": PP, "mu_gl": MG, "mu_tr": MT}
    B_gl, B_tr = aff.curvature_fields()

    def context(z):
        x = z[..., X]
        av, dav = _derivs(a, x, 1)
        hb = _h_blocks(h, z, blocks)
        hb["mu_gl"] = hb["mu_gl"].reshape(z.shape[:-1] + (n, n))
        return SimpleNamespace(z=z, x=x, p=z[..., PP], M=z[..., MG].reshape(z.shape[:-1] + (n, n)),
                               mt=z[..., MT], G=aff.gl_coeffs._evaluate(x),
                               T=aff.tr_coeffs._evaluate(x), Bg=B_gl._evaluate(x),
                               Bt=B_tr._evaluate(x), a=av, da=dav, D=d._evaluate(x),
                               g=g._evaluate(x), h=hb)

    def dp_mu_gl(c):
        hm = c.h["mu_gl"]
        return (np.einsum("...pki,...lp,...lk->...i", c.G, c.M, hm)
                - np.einsum("...lqi,...qk,...lk->...i", c.G, c.M, hm)
                - np.einsum("...li,...k,...lk->...i", c.T, c.mt, hm))

    def flat(arr):
        return arr.reshape(arr.shape[:-2] + (nn,))

    terms = [
        LiteralTerm("dx", "drift", "dh/dp_i", "p", lambda c: c.h["p"]),
        LiteralTerm("dx", "correction", "da^i/dx^k a^k", None,
                    lambda c: np.einsum("...ik,...k->...i", c.da, c.a)),
        LiteralTerm("dx", "diffusion", "a^i", "p", lambda c: c.a[..., None]),
        LiteralTerm("dp", "drift", "dh/dx^i", "x", lambda c: c.h["x"]),
        LiteralTerm("dp", "drift", "-(B^l_{kij} mu^k_l + B^l_{ij} mu_l) dh/dp_j", "p",
                    lambda c: -np.einsum("...lkij,...kl,...j->...i", c.Bg, c.M, c.h["p"])
                    - np.einsum("...lij,...l,...j->...i", c.Bt, c.mt, c.h["p"])),
        LiteralTerm("dp", "drift",
                    "((A^p_{ki} delta^l_q - A^l_{qi} delta^p_k) mu^q_p - A^l_i mu_k) dh/dmu^l_k",
                    "mu_gl", dp_mu_gl),
        LiteralTerm("dp", "drift", "A^p_{ki} mu_p dh/dmu_k", "mu_tr",
                    lambda c: np.einsum("...pki,...p,...k->...i", c.G, c.mt, c.h["mu_tr"])),
        LiteralTerm("dp", "correction", "{{p_i, f}, f}", None, _nested(P, f, PP)),
        LiteralTerm("dp", "diffusion", "{p_i, f}", None, _hamiltonian_column(P, f, PP)),
        LiteralTerm("dmu_gl", "drift",
                    "((A^p_{ki} delta^l_q - A^l_{qi} delta^p_k) mu^q_p - A^l_i mu_k) d^k_l", None, None,
                    note="i is free and l, k are both free and summed against d^k_l"),
        LiteralTerm("dmu_gl", "drift", "A^p_{ki} mu^l_p g^i", None,
                    lambda c: flat(np.einsum("...pki,...lp,...i->...lk", c.G, c.M, c.g))),
        LiteralTerm("dmu_gl", "correction", "{{mu^l_k, f}, f}", None, _nested(P, f, MG)),
        LiteralTerm("dmu_gl", "diffusion", "{mu^l_k, f}", None, _hamiltonian_column(P, f, MG)),
        LiteralTerm("dmu_tr", "drift", "-A^p_{ik} mu_p a^k - mu_i delta^l_k d^k_l", None,
                    lambda c: -np.einsum("...pik,...p,...k->...i", c.G, c.mt, c.a)
                    - c.mt * np.trace(c.D, axis1=-2, axis2=-1)[..., None]),
        LiteralTerm("dmu_tr", "correction", "{{mu_i, f}, f}", None, _nested(P, f, MT)),
        LiteralTerm("dmu_tr", "diffusion", "{mu_i, f}", None, _hamiltonian_column(P, f, MT)),
    ]
    return ExpansionSpec("affine_refinement", StochasticHamiltonianSystem(P, h, [f]), P, blocks,
                         {"dx": "x", "dp": "p", "dmu_gl": "mu_gl", "dmu_tr": "mu_tr"},
                         terms, context, _sampler(m))


# ----------------------------------------------------------------------------
# gl refinement: coordinates (x, q, p, lambda, mu)


def _gl_refinement(inputs):
    data: GLRefinementData = inputs["data"]
    n = data.n
    nn = n * n
    m = 4 * n + nn
    X, Q = np.arange(n), np.arange(n, 2 * n)
    PP, LL, MU = np.arange(2 * n, 3 * n), np.arange(3 * n, 4 * n), np.arange(4 * n, m)
    base = np.arange(2 * n)
    a = as_tensor_field(inputs.get("a", np.zeros(n)), 2 * n, (n,), name="a")
    d = as_tensor_field(inputs.get("d", np.zeros(n)), 2 * n, (n,), name="d")
    # g[k, j] multiplies mu^k_j
    g = as_tensor_field(inputs.get("g", np.zeros((n, n))), 2 * n, (n, n), name="g")
    g_flat = TensorField(2 * n, (nn,), lambda x: g._evaluate(x).reshape(x.shape[:-1] + (nn,)),
                         derivative=lambda x: g.derivative()._evaluate(x).reshape(
                             x.shape[:-1] + (nn, 2 * n)), name="g")
    P = gl_refinement_structure(data, q_lambda_coupling=bool(inputs.get("q_lambda_coupling", False)))
    h = as_scalar_field(inputs["h"], m)
    f = fiber_linear(m, base, np.arange(2 * n, m),
                     _noise_coefficients(2 * n, [(a, n), (d, n), (g_flat, nn)], "f"), name="f")
    blocks = {"x": X, "q": Q, "p": PP, "lambda": LL, "mu": MU}

    def context(z):
        xq = z[..., base]
        hb = _h_blocks(h, z, blocks)
        hb["mu"] = hb["mu"].reshape(z.shape[:-1] + (n, n))
        return SimpleNamespace(z=z, M=z[..., MU].reshape(z.shape[:-1] + (n, n)),
                               Ax=data.x_coeffs._evaluate(xq), Aq=data.q_coeffs._evaluate(xq), h=hb)

    def twist(coef, hm, M):
        return (np.einsum("...pki,...lp,...lk->...i", coef, M, hm)
                - np.einsum("...lqi,...qk,...lk->...i", coef, M, hm))

    def dmu_p(c):
        out = (np.einsum("...pkj,...lp,...j->...lk", c.Ax, c.M, c.h["p"])
               + np.einsum("...lqj,...qk,...j->...lk", c.Ax, c.M, c.h["p"]))
        return -out.reshape(out.shape[:-2] + (nn,))

    def dmu_mu(c):
        out = (np.einsum("...ik,...il->...lk", c.M, c.h["mu"])
               - np.einsum("...lj,...kj->...lk", c.M, c.h["mu"]))
        return out.reshape(out.shape[:-2] + (nn,))

    terms = [
        LiteralTerm("dx", "drift", "dh/dp_i", "p", lambda c: c.h["p"]),
        LiteralTerm("dx", "correction", "{{x^i, f}, f}", None, _nested(P, f, X)),
        LiteralTerm("dx", "diffusion", "{x^i, f}", None, _hamiltonian_column(P, f, X)),
        LiteralTerm("dp", "drift", "-dh/dx^i", "x", lambda c: -c.h["x"]),
        LiteralTerm("dp", "drift", "-1/2 B^l_{kij} mu^k_l", "p", None,
                    note="j is free: no dh/dp_j factor"),
        LiteralTerm("dp", "drift", "(A^p_{ki} delta^l_q - A^l_{qi} delta^p_k) mu^q_p dh/dmu^l_k", "mu",
                    lambda c: twist(c.Ax, c.h["mu"], c.M)),
        LiteralTerm("dp", "correction", "{{p_i, f}, f}", None, _nested(P, f, PP)),
        LiteralTerm("dp", "diffusion", "{p_i, f}", None, _hamiltonian_column(P, f, PP)),
        LiteralTerm("dq", "drift", "dh/dlambda_i", "lambda", lambda c: c.h["lambda"]),
        LiteralTerm("dq", "correction", "{{q^i, f}, f}", None, _nested(P, f, Q)),
        LiteralTerm("dq", "diffusion", "{q^i, f}", None, _hamiltonian_column(P, f, Q)),
        LiteralTerm("dlambda", "drift", "-dh/dq^i", "x", lambda c: -c.h["q"]),
        LiteralTerm("dlambda", "drift", "-1/2 B^l_{kij} mu^k_l", "lambda", None,
                    note="j is free: no dh/dlambda_j factor"),
        LiteralTerm("dlambda", "drift",
                    "(B^p_{ki} delta^l_q - B^l_{qi} delta^p_k) mu^q_p dh/dmu^l_k", "mu",
                    lambda c: twist(c.Aq, c.h["mu"], c.M)),
        LiteralTerm("dlambda", "correction", "{{lambda_i, f}, f}", None, _nested(P, f, LL)),
        LiteralTerm("dlambda", "diffusion", "{lambda_i, f}", None, _hamiltonian_column(P, f, LL)),
        LiteralTerm("dmu", "drift", "-(A^p_{kj} delta^l_q + A^l_{qj} delta^p_k) mu^q_p dh/dp_j", "p",
                    dmu_p),
        LiteralTerm("dmu", "drift", "-(B^p_{kj} delta^l_q - B^l_{kj} delta^p_k) mu^q_p dh/dlambda_j",
                    "lambda", None, note="k appears three times"),
        LiteralTerm("dmu", "drift", "(delta^l_j mu^i_k - delta^i_k mu^l_j) dh/dmu^i_j", "mu", dmu_mu),
        LiteralTerm("dmu", "correction", "{{mu^l_k, f}, f}", None, _nested(P, f, MU)),
        LiteralTerm("dmu", "diffusion", "{mu^l_k, f}", None, _hamiltonian_column(P, f, MU)),
    ]
    return ExpansionSpec("gl_refinement", StochasticHamiltonianSystem(P, h, [f]), P, blocks,
                         {"dx": "x", "dp": "p", "dq": "q", "dlambda": "lambda", "dmu": "mu"},
                         terms, context, _sampler(m))


_BUILDERS = {
    "algebroid_dual": _algebroid_dual,
    "whitney_sum": _whitney_sum,
    "adjoint_bundle": _adjoint_bundle,
    "affine_refinement": _affine_refinement,
    "gl_refinement": _gl_refinement,
}


def expansion_spec(kind: str, inputs: dict) -> ExpansionSpec:
    if kind not in _BUILDERS:
        raise ConfigurationError(f"unknown expansion kind {kind!r}; choose from {KINDS}", field="kind")
    if kind != "whitney_sum" and "h" not in inputs:
        raise ConfigurationError("a drift Hamiltonian is required", field="h")
    return _BUILDERS[kind](inputs)


# ----------------------------------------------------------------------------
# audit engine


def _relative(canon, lit):
    diff = np.abs(canon - lit)
    return diff, diff / np.maximum(1.0, np.abs(canon))


def _worst(values, per_point):
    idx = int(np.argmax(per_point)) if per_point.size else 0
    return np.asarray(values[idx]).tolist()


def audit(spec: ExpansionSpec, points, tol: float = 1e-6) -> AuditReport:
    """Compare every literal term with the compiled coefficients at ``points``."""
    sys = spec.system
    P = sys.P
    z = np.asarray(points, dtype=float).reshape(-1, P.m)
    N = len(z)
    lam = P._matrix(z)
    gh = fd_gradient(sys.h, z)
    gf = (np.stack([fd_gradient(f, z) for f in sys.noise], axis=-1) if sys.noise
          else np.zeros(z.shape + (0,)))
    double = compile(sys, half=False).correction(z)
    ctx = spec.context(z)
    report = AuditReport(spec.kind, tol, N)

    def contribution(part, rows, cols):
        sub = lam[:, rows[:, None], cols[None, :]]
        if part == "drift":
            return np.einsum("nij,nj->ni", sub, gh[:, cols])
        return np.einsum("nij,njs->nis", sub, gf[:, cols, :])

    def record(line, part, text, canon, lit, note="", status=None):
        diff, rel = _relative(canon, lit)
        per_point = rel.reshape(N, -1).max(axis=1, initial=0.0)
        if status is None:
            status = "ok" if per_point.max(initial=0.0) <= tol else "mismatch"
        report.records.append(AuditRecord(
            spec.kind, line, part, text, status,
            canonical=_worst(canon, per_point), literal=_worst(lit, per_point),
            delta=float(diff.max(initial=0.0)), relative=float(per_point.max(initial=0.0)),
            note=note))

    for line, block in spec.lines.items():
        rows = spec.blocks[block]
        for part in PARTS:
            terms = [t for t in spec.terms if t.line == line and t.part == part]
            if part == "correction":
                total = double[:, rows]
            else:
                total = contribution(part, rows, np.arange(P.m))
            literal_total = np.zeros_like(total)
            claimed = {}
            grouped, group_lit = [], np.zeros_like(total)
            for t in terms:
                if t.evaluate is None:
                    report.records.append(AuditRecord(spec.kind, line, part, t.text, "not-evaluable",
                                                      note=t.note))
                    if t.block is not None:
                        claimed.setdefault(t.block, [])
                    continue
                lit = np.broadcast_to(t.evaluate(ctx), total.shape)
                literal_total = literal_total + lit
                if t.block is not None and part != "correction":
                    claimed.setdefault(t.block, []).append((t, lit))
                else:
                    grouped.append(t)
                    group_lit = group_lit + lit
            covered = np.zeros_like(total)
            for name, items in claimed.items():
                canon = contribution(part, rows, spec.blocks[name]) if part != "correction" else 0.0
                covered = covered + canon
                if not items:
                    continue
                lit = sum(l for _, l in items)
                text = " + ".join(t.text for t, _ in items)
                note = "; ".join(t.note for t, _ in items if t.note)
                record(line, part, text, canon, lit, note=note)
            if grouped:
                text = " + ".join(t.text for t in grouped)
                note = "; ".join(t.note for t in grouped if t.note)
                if part == "correction":
                    note = "; ".join(filter(None, [note, "compared without the factor 1/2"]))
                record(line, part, text, total - covered, group_lit, note=note)
            elif part == "correction" or not terms:
                if part == "correction" or np.any(np.abs(total) > 0):
                    record(line, part, "(no term)", total, np.zeros_like(total),
                           note="nothing written for this part")
            else:
                for name, cols in spec.blocks.items():
                    if name in claimed:
                        continue
                    canon = contribution(part, rows, cols)
                    _, rel = _relative(canon, np.zeros_like(canon))
                    if rel.max(initial=0.0) > tol:
                        record(line, part, f"(missing {{{line[1:]}, {name}}} contribution)", canon,
                               np.zeros_like(canon), status="omitted",
                               note=f"compiled coefficient has a nonzero {name}-block term")
            report.literal[(line, part)] = literal_total
            report.canonical[(line, part)] = total
    return report


def expanded_system(kind: str, inputs: dict, half: bool = True, audit_points: int = 50,
                    seed: int = 0, tol: float = 1e-6, points=None) -> CompiledDynamics:
    """Compiled dynamics for one of the expanded structures, with audit report.

    ``inputs`` per kind:

    * ``algebroid_dual``: ``algebroid``, ``h``, ``sections`` (list of ``(r,)`` fields)
    * ``whitney_sum``: ``algebroid``, ``k_pp``, ``k_pxi``, ``k_xixi``, ``a`` and ``d`` lists
    * ``adjoint_bundle``: ``connection``, ``h``, ``a`` (``(n,)``), ``d`` (``(p,)``)
    * ``affine_refinement``: ``affine``, ``h``, ``a``, ``d`` (``d[l, k]`` multiplies
      ``mu^l_k``), ``g``
    * ``gl_refinement``: ``data``, ``h``, ``a``, ``d``, ``g`` (``g[k, j]`` multiplies
      ``mu^k_j``), optional ``q_lambda_coupling``
    """
    spec = expansion_spec(kind, dict(inputs))
    dyn = compile(spec.system, half=half)
    if points is None:
        points = spec.sampler(np.random.default_rng(seed), audit_points)
    dyn.audit = audit(spec, points, tol=tol)
    dyn.name = kind
    return dyn
