"""Named, config-driven instantiations of the Poisson constructors.

Every model takes a flat dictionary of plain parameters (numbers, strings,
lists and polynomial tables ``{"e1,...,en": coefficient}``; tensor-valued
polynomials are nested lists of such tables) and builds a
:class:`ModelInstance`: structure, default drift Hamiltonian, default noise
Hamiltonians and known Casimirs.  Because parameters are plain data, a
model round-trips through the YAML config unchanged.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .algebroid import LieAlgebroid, check_compatibility
from .connection import (
    PrincipalConnection,
    affine_connection_package,
    algebra_from_name,
    gl_refinement_data,
    se3,
    so21,
    so3,
)
from .errors import ConfigurationError, StochPoissonError
from .expansions import ExpansionSpec, audit, expansion_spec
from .geometry import Polynomial, ScalarField, as_scalar_field
from .poisson import PoissonStructure, antisymmetry_residual, check_jacobi, linear_lie_poisson

REGISTRATION_POINTS = 20
REGISTRATION_TOL = 1e-7


@dataclass(frozen=True)
class Param:
    kind: str  # int | str | bool | vector | poly | poly_tensor | poly_list | optional
    default: object
    help: str

    def describe(self) -> str:
        return f"{self.kind}: {self.help}"


@dataclass
class ModelInstance:
    name: str
    params: dict
    P: PoissonStructure
    h: ScalarField
    noise: List[ScalarField]
    casimirs: Dict[str, ScalarField] = field(default_factory=dict)
    spec: Optional[ExpansionSpec] = None
    algebroid: Optional[LieAlgebroid] = None

    @property
    def m(self) -> int:
        return self.P.m

    @property
    def expansion_kind(self) -> Optional[str]:
        return self.spec.kind if self.spec is not None else None

    def audit(self, n_points: int = 50, seed: int = 0, tol: float = 1e-6):
        if self.spec is None:
            raise ConfigurationError(f"model {self.name} has no expanded equations to audit",
                                     field="mode")
        points = self.spec.sampler(np.random.default_rng(seed), n_points)
        return audit(self.spec, points, tol=tol)


@dataclass
class ModelDescriptor:
    """Registry entry.  ``jacobi_consistent`` is False for structures whose
    coordinate brackets are known to violate the Jacobi identity; those are
    registered with ``registration_audit`` attached instead."""

    name: str
    summary: str
    schema: Dict[str, Param]
    factory: Callable[[dict], ModelInstance]
    dimension: Callable[[dict], int]
    jacobi_consistent: bool = True
    registration_jacobi: Optional[float] = None
    registration_antisymmetry: Optional[float] = None
    registration_audit: Optional[object] = None

    def defaults(self) -> dict:
        return {k: copy.deepcopy(p.default) for k, p in self.schema.items()}

    def resolve(self, params: Optional[dict] = None) -> dict:
        """Defaults overlaid with ``params``; unknown names are rejected."""
        params = dict(params or {})
        unknown = sorted(set(params) - set(self.schema))
        if unknown:
            raise ConfigurationError(
                f"unknown parameter(s) {unknown} for model {self.name}; "
                f"expected {sorted(self.schema)}", field=f"model.params.{unknown[0]}")
        out = self.defaults()
        out.update(copy.deepcopy(params))
        return out

    def build(self, params: Optional[dict] = None) -> ModelInstance:
        resolved = self.resolve(params)
        try:
            inst = self.factory(resolved)
        except ConfigurationError as exc:
            if exc.field and not str(exc.field).startswith("model."):
                raise ConfigurationError(str(exc).split(": ", 1)[-1],
                                         field=f"model.params.{exc.field}") from exc
            raise
        inst.params = resolved
        return inst

    def dims(self, params: Optional[dict] = None) -> int:
        return self.dimension(self.resolve(params))


# ----------------------------------------------------------------------------
# parameter conversion


def _num(params, key, kind=float):
    value = params[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a number, got {value!r}", field=key)
    if kind is int:
        if int(value) != value or value < 1:
            raise ConfigurationError(f"expected a positive integer, got {value!r}", field=key)
        return int(value)
    return float(value)


def _vector(params, key, length):
    value = params[key]
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigurationError(f"expected a list of numbers, got {value!r}", field=key) from None
    if arr.shape != (length,) or not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"expected {length} finite numbers, got {value!r}", field=key)
    return arr


def poly_field(value, nvars, shape=(), name="polynomial") -> Polynomial:
    """Polynomial from a table (scalar) or nested tables (tensor) with shape check."""
    try:
        if shape == ():
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return Polynomial.constant(nvars, float(value), name=name)
            if not isinstance(value, dict):
                raise ConfigurationError(f"expected a polynomial table, got {value!r}", field=name)
            return Polynomial.from_table(nvars, value, name=name)
        poly = Polynomial.from_nested(nvars, value, name=name)
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc).split(": ", 1)[-1], field=name) from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed polynomial table ({exc})", field=name) from None
    if poly.shape != tuple(shape):
        raise ConfigurationError(f"expected shape {tuple(shape)}, got {poly.shape}", field=name)
    return poly


def _poly_list(params, key, nvars, shape):
    value = params[key]
    if not isinstance(value, list):
        raise ConfigurationError(f"expected a list, got {value!r}", field=key)
    return [poly_field(v, nvars, shape, name=f"{key}[{i}]") for i, v in enumerate(value)]


def polynomial_to_config(poly: Polynomial):
    """Inverse of :func:`poly_field`: table or nested tables."""
    if poly.shape == ():
        return poly.to_table()

    def leaf(index):
        return {
            ",".join(str(int(e)) for e in row): float(c[index])
            for row, c in zip(poly.exponents, poly.coeffs) if c[index] != 0.0
        }

    def build(prefix):
        depth = len(prefix)
        if depth == len(poly.shape):
            return leaf(prefix)
        return [build(prefix + (i,)) for i in range(poly.shape[depth])]

    return build(())


def quadratic_table(nvars, weights):
    return {",".join("2" if j == i else "0" for j in range(nvars)): 0.5 * float(w)
            for i, w in enumerate(weights) if w != 0.0}


def _mono(nvars, *powers):
    e = [0] * nvars
    for i in powers:
        e[i] += 1
    return ",".join(str(v) for v in e)


def _identity_nested(n, r):
    return [[1.0 if i == a else 0.0 for a in range(r)] for i in range(n)]


def _zeros_nested(*shape):
    if not shape:
        return 0.0
    return [_zeros_nested(*shape[1:]) for _ in range(shape[0])]


# ----------------------------------------------------------------------------
# so(3) family


def _lie_poisson_constants(algebra_constants):
    # {x_i, x_j} = -C^k_{ij} x_k: the drift of h is then Euler's x' = x cross (dh/dx)
    return -np.transpose(algebra_constants, (1, 2, 0))


def _so3_dimension(params):
    return 6 if params["preset"] == "heavy_top" else 3


def _so3_factory(params) -> ModelInstance:
    preset = params["preset"]
    inertia = _vector(params, "inertia", 3)
    if np.any(inertia <= 0):
        raise ConfigurationError("moments of inertia must be positive", field="inertia")
    if preset in ("so3", "so21"):
        algebra = so3() if preset == "so3" else so21()
        m = 3
        labels = ["x1", "x2", "x3"]
        sign = [1.0, 1.0, 1.0 if preset == "so3" else -1.0]
        casimirs = {"casimir": Polynomial.from_table(m, quadratic_table(m, [2 * s for s in sign]),
                                                     name="casimir")}
        h = quadratic_table(m, 1.0 / inertia)
    elif preset == "heavy_top":
        algebra = se3()
        m = 6
        labels = ["Pi1", "Pi2", "Pi3", "G1", "G2", "G3"]
        chi = _vector(params, "center_of_mass", 3)
        h = quadratic_table(m, list(1.0 / inertia) + [0, 0, 0])
        for i in range(3):
            if chi[i] != 0.0:
                h[_mono(m, 3 + i)] = float(chi[i])
        casimirs = {
            "gamma_norm": Polynomial.from_table(m, {_mono(m, i, i): 1.0 for i in range(3, 6)},
                                                name="gamma_norm"),
            "pi_dot_gamma": Polynomial.from_table(m, {_mono(m, i, 3 + i): 1.0 for i in range(3)},
                                                  name="pi_dot_gamma"),
        }
    else:
        raise ConfigurationError(f"unknown preset {preset!r}; choose so3, so21 or heavy_top",
                                 field="preset")
    P = linear_lie_poisson(_lie_poisson_constants(algebra.constants), labels=labels,
                           name=f"lie-poisson({algebra.label})")
    noise = [Polynomial.coordinate(m, 0, name="f1")]
    return ModelInstance("so3_lie_poisson", params, P,
                         as_scalar_field(Polynomial.from_table(m, h, name="h")),
                         [as_scalar_field(f) for f in noise],
                         {k: as_scalar_field(v) for k, v in casimirs.items()})


SO3_SCHEMA = {
    "preset": Param("str", "so3", "structure constants: so3, so21 or heavy_top (se3, dim 6)"),
    "inertia": Param("vector", [1.0, 2.0, 3.0], "moments of inertia I1..I3"),
    "center_of_mass": Param("vector", [0.0, 0.0, 1.0],
                            "heavy_top only: linear gravity term chi . Gamma"),
}


# ----------------------------------------------------------------------------
# algebroid-based models


def _algebroid(params):
    n = _num(params, "n", int)
    r = _num(params, "r", int)
    anchor = poly_field(params["anchor"], n, (n, r), name="anchor")
    structure = poly_field(params["structure"], n, (r, r, r), name="structure")
    return LieAlgebroid(n, r, anchor, structure, name="A")


def _finish(name, params, spec: ExpansionSpec, casimirs=None, algebroid=None):
    sys = spec.system
    return ModelInstance(name, params, sys.P, sys.h, list(sys.noise), casimirs or {},
                         spec=spec, algebroid=algebroid)


def _algebroid_dual_factory(params):
    A = _algebroid(params)
    m = A.n + A.r
    h = poly_field(params["h"], m, name="h")
    sections = _poly_list(params, "sections", A.n, (A.r,))
    spec = expansion_spec("algebroid_dual", {"algebroid": A, "h": h, "sections": sections})
    return _finish("algebroid_dual", params, spec, algebroid=A)


ALGEBROID_SCHEMA = {
    "n": Param("int", 2, "base dimension"),
    "r": Param("int", 2, "algebroid rank"),
    "anchor": Param("poly_tensor", _identity_nested(2, 2), "anchor b^i_alpha(x), shape (n, r)"),
    "structure": Param("poly_tensor", _zeros_nested(2, 2, 2),
                       "structure functions C^gamma_{alpha beta}(x), shape (r, r, r)"),
}


def _whitney_factory(params):
    A = _algebroid(params)
    n, r = A.n, A.r
    inputs = {
        "algebroid": A,
        "k_pp": poly_field(params["k_pp"], n, (n, n), name="k_pp"),
        "k_pxi": poly_field(params["k_pxi"], n, (n, r), name="k_pxi"),
        "k_xixi": poly_field(params["k_xixi"], n, (r, r), name="k_xixi"),
        "a": _poly_list(params, "a", n, (r,)),
        "d": _poly_list(params, "d", n, (n,)),
    }
    if len(inputs["a"]) != len(inputs["d"]):
        raise ConfigurationError("one d_s per a_s required", field="d")
    return _finish("whitney_sum", params, expansion_spec("whitney_sum", inputs), algebroid=A)


def _adjoint_factory(params):
    algebra = algebra_from_name(params["algebra"])
    n = _num(params, "n", int)
    p = algebra.p
    conn = PrincipalConnection(algebra, n, poly_field(params["connection"], n, (p, n),
                                                      name="connection"))
    m = 2 * n + p
    inputs = {
        "connection": conn,
        "h": poly_field(params["h"], m, name="h"),
        "a": poly_field(params["a"], n, (n,), name="a"),
        "d": poly_field(params["d"], n, (p,), name="d"),
    }
    return _finish("adjoint_bundle", params, expansion_spec("adjoint_bundle", inputs))


def _affine_factory(params):
    n = _num(params, "n", int)
    aff = affine_connection_package(poly_field(params["gl_coefficients"], n, (n, n, n),
                                               name="gl_coefficients"),
                                    poly_field(params["translation_coefficients"], n, (n, n),
                                               name="translation_coefficients"), n)
    m = 2 * n + n * n + n
    inputs = {
        "affine": aff,
        "h": poly_field(params["h"], m, name="h"),
        "a": poly_field(params["a"], n, (n,), name="a"),
        "d": poly_field(params["d"], n, (n, n), name="d"),
        "g": poly_field(params["g"], n, (n,), name="g"),
    }
    return _finish("affine_refinement", params, expansion_spec("affine_refinement", inputs))


def _gl_factory(params):
    n = _num(params, "n", int)
    base = 2 * n
    curv = params.get("curvature")
    blocks = {}
    if curv is not None:
        if not isinstance(curv, dict) or set(curv) != {"xx", "qq", "xq"}:
            raise ConfigurationError("curvature must map xx, qq and xq to tables",
                                     field="curvature")
        blocks = {f"curv_{k}": poly_field(v, base, (n, n, n, n), name=f"curvature.{k}")
                  for k, v in curv.items()}
    data = gl_refinement_data(poly_field(params["x_coefficients"], base, (n, n, n),
                                         name="x_coefficients"),
                              poly_field(params["q_coefficients"], base, (n, n, n),
                                         name="q_coefficients"), n, **blocks)
    m = 4 * n + n * n
    flag = params["q_lambda_coupling"]
    if not isinstance(flag, bool):
        raise ConfigurationError(f"expected true or false, got {flag!r}", field="q_lambda_coupling")
    inputs = {
        "data": data,
        "h": poly_field(params["h"], m, name="h"),
        "a": poly_field(params["a"], base, (n,), name="a"),
        "d": poly_field(params["d"], base, (n,), name="d"),
        "g": poly_field(params["g"], base, (n, n), name="g"),
        "q_lambda_coupling": flag,
    }
    return _finish("gl_refinement", params, expansion_spec("gl_refinement", inputs))


# default parameter tables (degree <= 2 polynomials)

def _half_norm(m):
    return quadratic_table(m, [1.0] * m)


_ALGEBROID_DUAL_DEFAULTS = dict(
    ALGEBROID_SCHEMA,
    h=Param("poly", _half_norm(4), "drift Hamiltonian on (x, xi)"),
    sections=Param("poly_list", [[{"0,1": 1.0}, {"1,0": -1.0}], [{"0,0": 1.0}, {"1,1": 0.5}]],
                   "noise sections a_s(x), each shape (r,)"),
)

_WHITNEY_DEFAULTS = dict(
    ALGEBROID_SCHEMA,
    k_pp=Param("poly_tensor", [[1.0, 0.0], [0.0, 1.0]], "kinetic matrix on p, shape (n, n)"),
    k_pxi=Param("poly_tensor", [[0.0, {"1,0": 0.5}], [0.0, 0.0]], "p-xi coupling, shape (n, r)"),
    k_xixi=Param("poly_tensor", [[1.0, 0.0], [0.0, {"0,2": 1.0}]], "matrix on xi, shape (r, r)"),
    a=Param("poly_list", [[{"0,1": 1.0}, 0.0]], "noise sections a_s, each shape (r,)"),
    d=Param("poly_list", [[0.0, {"1,0": 1.0}]], "noise vector fields d_s, each shape (n,)"),
)

_ADJOINT_DEFAULTS = {
    "algebra": Param("str", "so3", "Lie algebra: so3, so21, se3, abelian:p, gl:n or ga:n"),
    "n": Param("int", 2, "base dimension"),
    "connection": Param("poly_tensor",
                        [[0.0, {"1,0": 1.0}], [{"0,1": 0.5}, 0.0], [{"1,1": 0.3}, {"2,0": -0.2}]],
                        "connection coefficients A^a_i(x), shape (p, n)"),
    "h": Param("poly", _half_norm(7), "drift Hamiltonian on (x, p, mu)"),
    "a": Param("poly_tensor", [{"0,1": 1.0}, 0.5], "noise coefficients of p, shape (n,)"),
    "d": Param("poly_tensor", [1.0, 0.0, {"1,0": 0.5}], "noise coefficients of mu, shape (p,)"),
}

_AFFINE_DEFAULTS = {
    "n": Param("int", 2, "base dimension"),
    "gl_coefficients": Param("poly_tensor",
                             [[[{"1,0": 0.5}, 0.0], [0.0, {"0,1": -0.3}]],
                              [[0.2, 0.0], [{"1,1": 0.4}, 0.0]]],
                             "A^h_{kr}(x), shape (n, n, n)"),
    "translation_coefficients": Param("poly_tensor", [[{"0,1": 1.0}, 0.0], [0.0, {"1,0": 0.5}]],
                                      "A^h_r(x), shape (n, n)"),
    "h": Param("poly", _half_norm(10), "drift Hamiltonian on (x, p, mu_gl, mu_tr)"),
    "a": Param("poly_tensor", [1.0, {"1,0": 0.5}], "noise coefficients of p, shape (n,)"),
    "d": Param("poly_tensor", [[0.5, 0.0], [0.0, {"0,1": 1.0}]],
               "noise coefficients d[l, k] of mu^l_k, shape (n, n)"),
    "g": Param("poly_tensor", [0.0, 1.0], "noise coefficients of mu_tr, shape (n,)"),
}

_GL_DEFAULTS = {
    "n": Param("int", 2, "base dimension (coordinates x and q each have n)"),
    "x_coefficients": Param("poly_tensor",
                            [[[{"0,1,0,0": 0.5}, 0.0], [0.0, {"0,0,1,0": -0.3}]],
                             [[0.2, 0.0], [0.0, {"1,0,0,1": 0.4}]]],
                            "A^h_{ki}(x, q) along dx^i, shape (n, n, n)"),
    "q_coefficients": Param("poly_tensor",
                            [[[0.0, {"1,0,0,0": 0.3}], [0.1, 0.0]],
                             [[0.0, 0.0], [{"0,0,0,1": -0.2}, 0.0]]],
                            "B^h_{ki}(x, q) along dq^i, shape (n, n, n)"),
    "curvature": Param("optional", None,
                       "optional {xx, qq, xq} curvature tables, shape (n, n, n, n); "
                       "derived from the coefficients when null"),
    "q_lambda_coupling": Param("bool", False, "couple lambda to q instead of x"),
    "h": Param("poly", _half_norm(12), "drift Hamiltonian on (x, q, p, lambda, mu)"),
    "a": Param("poly_tensor", [1.0, {"0,1,0,0": 0.5}], "noise coefficients of p, shape (n,)"),
    "d": Param("poly_tensor", [{"1,0,0,0": 1.0}, 0.0], "noise coefficients of lambda, shape (n,)"),
    "g": Param("poly_tensor", [[0.5, 0.0], [0.0, {"0,0,1,0": 1.0}]],
               "noise coefficients g[k, j] of mu^k_j, shape (n, n)"),
}


def _build_registry() -> List[ModelDescriptor]:
    def alg_dim(p):
        return int(p["n"]) + int(p["r"])

    def adj_dim(p):
        return 2 * int(p["n"]) + algebra_from_name(p["algebra"]).p

    return [
        ModelDescriptor("so3_lie_poisson", "rigid body on so(3)*; presets so21, heavy_top",
                        SO3_SCHEMA, _so3_factory, _so3_dimension),
        ModelDescriptor("algebroid_dual", "dual of a Lie algebroid, coordinates (x, xi)",
                        _ALGEBROID_DUAL_DEFAULTS, _algebroid_dual_factory, alg_dim),
        ModelDescriptor("whitney_sum", "T*M + A* with coordinates (x, p, xi)",
                        _WHITNEY_DEFAULTS, _whitney_factory,
                        lambda p: 2 * int(p["n"]) + int(p["r"])),
        ModelDescriptor("adjoint_bundle", "dual adjoint bundle with a principal connection",
                        _ADJOINT_DEFAULTS, _adjoint_factory, adj_dim),
        ModelDescriptor("affine_refinement", "affine frame bundle split into gl and translations",
                        _AFFINE_DEFAULTS, _affine_factory,
                        lambda p: 3 * int(p["n"]) + int(p["n"]) ** 2, jacobi_consistent=False),
        ModelDescriptor("gl_refinement", "gl(n) refinement over coordinates (x, q)",
                        _GL_DEFAULTS, _gl_factory,
                        lambda p: 4 * int(p["n"]) + int(p["n"]) ** 2, jacobi_consistent=False),
    ]


def _register(desc: ModelDescriptor) -> ModelDescriptor:
    """Build the defaults once and record their antisymmetry/Jacobi residuals."""
    inst = desc.build()
    pts = np.random.default_rng(1).standard_normal((REGISTRATION_POINTS, inst.m))
    desc.registration_antisymmetry = float(np.max(antisymmetry_residual(inst.P, pts)))
    if desc.registration_antisymmetry > 1e-12:
        raise StochPoissonError(f"{desc.name}: default structure is not antisymmetric")
    desc.registration_jacobi = check_jacobi(inst.P, pts).max()
    if desc.jacobi_consistent:
        if desc.registration_jacobi > REGISTRATION_TOL:
            raise StochPoissonError(
                f"{desc.name}: default structure fails Jacobi ({desc.registration_jacobi:.3g})")
    else:
        desc.registration_audit = inst.audit(n_points=REGISTRATION_POINTS)
    return desc


_REGISTRY: Optional[Dict[str, ModelDescriptor]] = None


def registry() -> List[ModelDescriptor]:
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = {d.name: _register(d) for d in _build_registry()}
    return list(_REGISTRY.values())


def get_model(name: str) -> ModelDescriptor:
    for desc in registry():
        if desc.name == name:
            return desc
    raise ConfigurationError(
        f"unknown model {name!r}; available: {[d.name for d in registry()]}", field="model.name")


def build_model(name: str, params: Optional[dict] = None) -> ModelInstance:
    return get_model(name).build(params)


def list_models() -> str:
    """Plain-text table: name, dimension at defaults, summary, parameter schema."""
    lines = [f"{'model':<20} {'dim':>4}  {'jacobi':<9} parameters"]
    for d in registry():
        params = ", ".join(f"{k} ({p.kind})" for k, p in d.schema.items())
        status = "ok" if d.jacobi_consistent else "audited"
        lines.append(f"{d.name:<20} {d.dims():>4}  {status:<9} {params}")
    lines.append("")
    for d in registry():
        lines.append(f"{d.name}: {d.summary}")
        for k, p in d.schema.items():
            lines.append(f"    {k:<26} {p.describe()}")
    return "\n".join(lines) + "\n"


def compatibility_report(inst: ModelInstance, samples):
    """Algebroid compatibility residuals, or None for models without one."""
    if inst.algebroid is None:
        return None
    return check_compatibility(inst.algebroid, samples)
