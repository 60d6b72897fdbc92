"""Stochastic Hamiltonian systems on Poisson manifolds.

A system ``(P, h, f_1..f_r)`` is the Stratonovich equation

    dz = X_h(z) dt + sum_s X_{f_s}(z) o dB^s,     X_g^I = {z^I, g}.

Its Ito form adds ``correction^I = 1/2 sum_s {{z^I, f_s}, f_s}``.  The
factor 1/2 is the standard conversion for independent Brownian motions
(``[B^a, B^b]_t = t delta^{ab}``); ``half=False`` drops it to reproduce the
double-bracket drift written without it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .geometry import Polynomial, as_points, as_scalar_field, coordinate, fd_gradient
from .poisson import PoissonStructure, bracket, bracket_field, hamiltonian_field, linear_lie_poisson


class StochasticHamiltonianSystem:
    """Poisson structure, drift Hamiltonian and noise Hamiltonians."""

    def __init__(self, P: PoissonStructure, h, noise: Sequence = ()):
        self.P = P
        self.h = as_scalar_field(h, P.m)
        self.noise = [as_scalar_field(f, P.m) for f in noise]

    @property
    def m(self):
        return self.P.m

    @property
    def r(self):
        return len(self.noise)

    def __repr__(self):
        return f"StochasticHamiltonianSystem({self.P.name!r}, m={self.m}, r={self.r})"


@dataclass
class CompiledDynamics:
    """Coefficient functions of a compiled system.

    ``ito_drift(z) = stratonovich_drift(z) + correction(z)``; ``diffusion(z)``
    has shape ``(..., m, r)`` with column ``s`` the field driven by ``B^s``.
    ``audit`` holds the literal-expansion report for systems built by
    :func:`stochpoisson.expansions.expanded_system`.
    """

    m: int
    r: int
    stratonovich_drift: Callable
    diffusion: Callable
    correction: Callable
    half: bool = True
    name: str = "dynamics"
    audit: Optional[object] = None
    system: Optional[StochasticHamiltonianSystem] = field(default=None, repr=False)

    def ito_drift(self, z):
        return self.stratonovich_drift(z) + self.correction(z)


def _analytic_route(sys: StochasticHamiltonianSystem) -> bool:
    if not sys.P.has_analytic_derivative:
        return False
    for f in sys.noise:
        if f.grad is None or not f.grad.has_derivative:
            return False
    return True


def compile(sys: StochasticHamiltonianSystem, half: bool = True, method: str = "auto") -> CompiledDynamics:
    """Drift, diffusion and Ito correction of ``sys``.

    ``method="nested"`` evaluates every correction component as the nested
    bracket ``{{z^I, f_s}, f_s}``; ``"analytic"`` contracts exact
    derivatives of the bracket matrix and noise Hessians; ``"auto"`` picks
    the analytic route when every ingredient has exact derivatives.
    """
    if method not in ("auto", "nested", "analytic"):
        raise ConfigurationError(f"unknown correction method {method!r}", field="method")
    analytic = _analytic_route(sys)
    if method == "analytic" and not analytic:
        raise ConfigurationError("analytic correction needs exact structure and noise Hessians",
                                 field="method")
    use_analytic = analytic and method != "nested"
    P, m, r = sys.P, sys.m, sys.r
    factor = 0.5 if half else 1.0

    def drift(z):
        return hamiltonian_field(P, sys.h, z)

    def diffusion(z):
        z = as_points(z, m)
        if r == 0:
            return np.zeros(z.shape[:-1] + (m, 0))
        lam = P._matrix(z)
        grads = np.stack([fd_gradient(f, z) for f in sys.noise], axis=-1)
        return np.einsum("...ij,...js->...is", lam, grads)

    if r == 0:
        def correction(z):
            return np.zeros(as_points(z, m).shape)
    elif use_analytic:
        def correction(z):
            return factor * _analytic_double_bracket(P, sys.noise, as_points(z, m))
    else:
        nested = nested_double_brackets(sys)

        def correction(z):
            z = as_points(z, m)
            return factor * np.stack([sum(bracket(P, g, f, z) for g, f in row) for row in nested],
                                     axis=-1)

    return CompiledDynamics(m, r, drift, diffusion, correction, half=half,
                            name=P.name, system=sys)


def nested_double_brackets(sys: StochasticHamiltonianSystem):
    """For each coordinate ``I`` the pairs ``({z^I, f_s}, f_s)``, ``s = 1..r``."""
    rows = []
    for i in range(sys.m):
        zi = coordinate(sys.m, i)
        rows.append([(bracket_field(sys.P, zi, f), f) for f in sys.noise])
    return rows


def _analytic_double_bracket(P, noise, z):
    """``sum_s (d_K Lambda^{IJ} d_J f + Lambda^{IJ} d_J d_K f) X_s^K``."""
    lam = P._matrix(z)
    dlam = P.matrix_derivative(z)
    out = np.zeros(z.shape)
    for f in noise:
        g = f.grad._evaluate(z)
        hess = f.grad.derivative()._evaluate(z)
        x = np.einsum("...ij,...j->...i", lam, g)
        inner = np.einsum("...ijk,...j->...ik", dlam, g) + np.einsum("...ij,...jk->...ik", lam, hess)
        out += np.einsum("...ik,...k->...i", inner, x)
    return out


def ito_correction(sys: StochasticHamiltonianSystem, z, half: bool = True, method: str = "auto"):
    """``(1/2) sum_s {{z^I, f_s}, f_s}(z)`` (without the 1/2 when ``half=False``)."""
    return compile(sys, half=half, method=method).correction(z)


def linear_fast_path(constants, h, alphas, half: bool = True) -> CompiledDynamics:
    """Closed-form coefficients for ``{x^i, x^j} = L^{ij}_k x^k`` and ``f_a = alpha_{ai} x^i``.

    ``diffusion^i_a = alpha_{aj} L^{ij}_l x^l`` and
    ``correction^i = 1/2 sum_a alpha_{aj} alpha_{ak} L^{ij}_p L^{pk}_l x^l``.
    """
    L = np.asarray(constants, dtype=float)
    alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
    n = L.shape[0]
    if L.shape != (n, n, n):
        raise ConfigurationError(f"structure constants must be n x n x n, got {L.shape}",
                                 field="constants")
    if alphas.shape[1] != n:
        raise ConfigurationError(f"alphas must have {n} columns, got {alphas.shape}", field="alphas")
    P = linear_lie_poisson(L)
    h = as_scalar_field(h, n)
    r = alphas.shape[0]
    # diffusion matrix D[i, a, l] and correction matrix K[i, l]; both linear in x
    D = np.einsum("aj,ijl->ial", alphas, L)
    K = (0.5 if half else 1.0) * np.einsum("aj,ak,ijp,pkl->il", alphas, alphas, L, L)

    def drift(z):
        z = as_points(z, n)
        return np.einsum("ijl,...l,...j->...i", L, z, fd_gradient(h, z))

    def diffusion(z):
        return np.einsum("ial,...l->...ia", D, as_points(z, n))

    def correction(z):
        return np.einsum("il,...l->...i", K, as_points(z, n))

    noise = [Polynomial.linear(a) for a in alphas]
    sys = StochasticHamiltonianSystem(P, h, [as_scalar_field(f) for f in noise])
    return CompiledDynamics(n, r, drift, diffusion, correction, half=half,
                            name="linear-fast-path", system=sys)


def diffusion_jacobian_correction(dyn: CompiledDynamics, z, step=None) -> np.ndarray:
    """``1/2 sum_s (d sigma_s) sigma_s`` from finite differences of the diffusion.

    Independent of the bracket machinery; used to cross-check
    :func:`ito_correction`.
    """
    from .geometry import central_difference

    z = as_points(z, dyn.m)
    sigma = dyn.diffusion(z)
    jac = central_difference(dyn.diffusion, z, dyn.m, step=step, name="diffusion")
    factor = 0.5 if dyn.half else 1.0
    return factor * np.einsum("...isk,...ks->...i", jac, sigma)
