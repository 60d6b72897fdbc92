"""Stochastic Hamiltonian dynamics on Poisson manifolds.

Poisson structures built from Lie algebras, Lie algebroids and principal
connections; Stratonovich/Ito compilation of Hamiltonian SDEs; seeded
Euler-Maruyama and Heun integrators; and audits of expanded coordinate
equations against the compiled coefficients.
"""

from .errors import (
    BlowUpError,
    ConfigurationError,
    DifferentiationError,
    FieldEvaluationError,
    StochPoissonError,
    StructureError,
)
from .geometry import Polynomial, ScalarField, TensorField, fd_gradient, fd_jacobian
from .algebroid import LieAlgebroid, check_compatibility, tangent_algebroid
from .connection import LieAlgebraSpec, PrincipalConnection, algebra_from_name, curvature
from .poisson import (
    PoissonStructure,
    bracket,
    check_jacobi,
    from_algebroid,
    hamiltonian_field,
    linear_lie_poisson,
)
from .sde import CompiledDynamics, StochasticHamiltonianSystem, compile, ito_correction
from .integrate import (
    IntegratorConfig,
    casimir_monitor,
    euler_maruyama,
    run_ensemble,
    stratonovich_heun,
)
from .models import build_model, registry

__all__ = [
    "BlowUpError",
    "ConfigurationError",
    "DifferentiationError",
    "FieldEvaluationError",
    "StochPoissonError",
    "StructureError",
    "Polynomial",
    "ScalarField",
    "TensorField",
    "fd_gradient",
    "fd_jacobian",
    "LieAlgebroid",
    "check_compatibility",
    "tangent_algebroid",
    "LieAlgebraSpec",
    "PrincipalConnection",
    "algebra_from_name",
    "curvature",
    "PoissonStructure",
    "bracket",
    "check_jacobi",
    "from_algebroid",
    "hamiltonian_field",
    "linear_lie_poisson",
    "CompiledDynamics",
    "StochasticHamiltonianSystem",
    "compile",
    "ito_correction",
    "IntegratorConfig",
    "casimir_monitor",
    "euler_maruyama",
    "run_ensemble",
    "stratonovich_heun",
    "build_model",
    "registry",
]

__version__ = "0.1.0"
