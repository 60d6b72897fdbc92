"""End-to-end acceptance suite; each test prints one PASS/FAIL line."""

import numpy as np

from stochpoisson.algebroid import tangent_algebroid
from stochpoisson.cli import main
from stochpoisson.connection import (
    LEVI_CIVITA,
    PrincipalConnection,
    abelian,
    affine_connection_package,
    gl_refinement_data,
    so3,
)
from stochpoisson.expansions import expanded_system
from stochpoisson.geometry import Polynomial, coordinate
from stochpoisson.integrate import IntegratorConfig, run_ensemble
from stochpoisson.models import build_model
from stochpoisson.poisson import (
    adjoint_bundle_structure,
    affine_refinement_structure,
    antisymmetry_residual,
    check_jacobi,
    from_algebroid,
    gl_refinement_structure,
    linear_lie_poisson,
    whitney_sum_structure,
)
from stochpoisson.sde import StochasticHamiltonianSystem, compile, linear_fast_path

from test_cli import CONFIGS


def so3_noise_system():
    """h = 0, single noise Hamiltonian x1 on {x^i, x^j} = eps_ijk x^k."""
    P = linear_lie_poisson(LEVI_CIVITA)
    return StochasticHamiltonianSystem(P, Polynomial.constant(3, 0.0), [coordinate(3, 0)])


def test_structure_validity(acceptance_report):
    rng = np.random.default_rng(1)
    abelian_A = Polynomial.from_nested(2, [[{"1,0": 1.0, "0,2": 0.5}, {"1,1": -1.0}],
                                           [0.3, {"2,0": 2.0}]])
    so3_A = Polynomial.from_nested(3, [[{"1,0,0": 1.0, "0,1,1": 0.5}, {"0,2,0": 0.3}, 0.0],
                                       [{"0,0,1": -1.0}, {"1,1,0": 0.2}, 0.7],
                                       [0.0, {"1,0,0": 2.0}, {"0,0,2": 0.1}]])
    structures = {
        "so3_lie_poisson": build_model("so3_lie_poisson").P,
        "algebroid_dual(tangent)": from_algebroid(tangent_algebroid(2)),
        "adjoint_bundle(abelian)": adjoint_bundle_structure(PrincipalConnection(abelian(2), 2,
                                                                                abelian_A)),
        "adjoint_bundle(so3)": adjoint_bundle_structure(PrincipalConnection(so3(), 3, so3_A)),
    }
    details, ok = [], True
    for name, P in structures.items():
        pts = rng.standard_normal((100, P.m))
        anti = float(np.max(antisymmetry_residual(P, pts)))
        rep = check_jacobi(P, pts, analytic=True)
        good = anti <= 1e-12 and rep.analytic and rep.max() < 1e-7
        ok &= good
        details.append(f"{name} anti={anti:.1e} jacobi={rep.max():.1e}")
    assert acceptance_report(1, "structure validity", ok, "; ".join(details))


def test_bracket_pinning(acceptance_report):
    checks = {}
    lp = linear_lie_poisson(LEVI_CIVITA)
    checks["lie-poisson at (1,2,3)"] = np.array_equal(
        lp.matrix([1.0, 2.0, 3.0]), [[0.0, 3.0, -2.0], [-3.0, 0.0, 1.0], [2.0, -1.0, 0.0]])
    checks["dual tangent n=r=1"] = np.array_equal(
        from_algebroid(tangent_algebroid(1)).matrix([0.4, -1.2]), [[0.0, 1.0], [-1.0, 0.0]])
    W = whitney_sum_structure(tangent_algebroid(2))
    lam = W.matrix(np.arange(6.0))
    checks["whitney {x^i,p_j}"] = np.array_equal(lam[:2, 2:4], np.eye(2))
    A = Polynomial.from_nested(2, [[0.0, {"1,0": 1.0}]])
    adj = adjoint_bundle_structure(PrincipalConnection(abelian(1), 2, A))
    z = np.array([0.3, -0.7, 1.1, 2.0, 1.0])
    checks["adjoint {p1,p2}"] = adj.matrix(z)[adj.index("p1"), adj.index("p2")] == -1.0
    checks["adjoint {x^i,p_j}"] = np.array_equal(adj.matrix(z)[:2, 2:4], np.eye(2))
    aff = affine_refinement_structure(affine_connection_package(np.zeros((2, 2, 2)),
                                                                np.zeros((2, 2)), 2))
    w = np.arange(10.0)
    lo, hi = aff.blocks["mu_gl"]
    w[lo:hi] = np.eye(2).ravel()
    checks["affine gl block at identity"] = not np.any(aff.matrix(w)[lo:hi, lo:hi])
    gl_ref = gl_refinement_structure(gl_refinement_data(np.zeros((2, 2, 2)),
                                                        np.zeros((2, 2, 2)), 2))
    lam = gl_ref.matrix(np.arange(12.0))
    checks["gl refinement {x^i,p_j} and {x^i,lambda_j}"] = (
        np.array_equal(lam[:2, 4:6], np.eye(2)) and np.array_equal(lam[:2, 6:8], np.eye(2)))
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    assert acceptance_report(2, "bracket-table pinning", ok,
                             f"{len(checks)} entries" + (f", failed: {failed}" if failed else ""))


def test_expansion_oracles(acceptance_report):
    h = Polynomial.from_table(4, {"0,0,2,0": 0.5, "0,0,0,2": 0.5})
    dyn = expanded_system("algebroid_dual", {"algebroid": tangent_algebroid(2), "h": h,
                                             "sections": [np.array([1.0, -0.5])]},
                          audit_points=50, seed=0, tol=1e-6)
    worst = max(dyn.audit.line_error(*key) for key in dyn.audit.canonical)
    ok = worst < 1e-6 and dyn.audit.empty
    details = [f"tangent worst rel={worst:.1e}"]
    for name in ("whitney_sum", "adjoint_bundle", "affine_refinement", "gl_refinement"):
        inst = build_model(name)
        rep = inst.audit(n_points=50, seed=0, tol=1e-6)
        named = all(rec.line in inst.spec.lines and rec.term for rec in rep.flagged)
        ok &= bool(rep.flagged) and named
        lines = sorted({rec.line for rec in rep.flagged})
        details.append(f"{name} flagged {len(rep.flagged)} on {lines}")
    assert acceptance_report(3, "expansion oracles", ok, "; ".join(details))


def _final_means(half, scheme, seed):
    dyn = compile(so3_noise_system(), half=half)
    cfg = IntegratorConfig(scheme, 1e-3, 1000, seed)
    stats = run_ensemble(dyn, np.array([1.0, 2.0, 3.0]), cfg, 10_000, record_every=1000)
    return stats.mean[-1], stats.stderr[-1]


def test_ito_correction_arbiter(acceptance_report):
    heun_mean, heun_se = _final_means(True, "stratonovich_heun", 101)
    ratios = {}
    for half in (True, False):
        em_mean, em_se = _final_means(half, "euler_maruyama", 202)
        diff, se = np.abs(em_mean - heun_mean), np.sqrt(em_se ** 2 + heun_se ** 2)
        # x1 is not driven by the noise: zero spread, and both schemes keep it fixed
        ratios[half] = np.where(se > 0, diff / np.where(se > 0, se, 1.0),
                                np.where(diff > 0, np.inf, 0.0))
    with_half = bool(np.all(ratios[True] < 3.0))
    without_half = bool(np.any(ratios[False] > 5.0))
    ok = with_half and without_half
    assert acceptance_report(
        4, "Ito correction arbiter", ok,
        f"half: max {ratios[True].max():.2f} SE (< 3); "
        f"no half: max {ratios[False].max():.2f} SE (> 5)")


def _casimir_drift(dt):
    inst = build_model("so3_lie_poisson")
    dyn = compile(StochasticHamiltonianSystem(inst.P, inst.h, inst.noise))
    steps = int(round(1.0 / dt))
    stats = run_ensemble(dyn, np.array([1.0, 2.0, 3.0]),
                         IntegratorConfig("stratonovich_heun", dt, steps, 0), 10,
                         record_every=steps, keep_paths=10)
    c = np.array([np.sum(p.states ** 2, axis=1) for p in stats.paths])
    return float(np.max(np.abs(c - c[:, :1]) / np.abs(c[:, :1])))


def test_casimir_conservation(acceptance_report):
    drifts = {dt: _casimir_drift(dt) for dt in (1e-2, 1e-3, 1e-4)}
    bound = drifts[1e-3] < 1e-5
    ratios = [drifts[1e-2] / drifts[1e-3], drifts[1e-3] / drifts[1e-4]]
    linear = all(5.0 <= r <= 20.0 for r in ratios)
    ok = bound and linear
    assert acceptance_report(
        5, "Casimir conservation", ok,
        f"drift at dt=1e-3: {drifts[1e-3]:.2e} (bound 1e-5 {'met' if bound else 'missed'}); "
        f"dt ratios {ratios[0]:.2f}, {ratios[1]:.2f} (linear {'yes' if linear else 'no'})")


def test_determinism(acceptance_report, tmp_path):
    files = {"so3.yaml": ("so3_paths.csv", "so3_stats.json"),
             "adjoint_bundle.yaml": ("adjoint_paths.csv", "adjoint_stats.json")}
    ok = True
    for config, names in files.items():
        runs = []
        for k in range(2):
            out = tmp_path / f"{config}-{k}"
            ok &= main(["simulate", str(CONFIGS / config), "--out-dir", str(out)]) == 0
            runs.append([(out / n).read_bytes() for n in names])
        ok &= runs[0] == runs[1]
    assert acceptance_report(6, "determinism", ok, f"{len(files)} configs run twice")


def test_linear_fast_path(acceptance_report):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        n, r = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        raw = rng.standard_normal((n, n, n))
        L = raw - np.swapaxes(raw, 0, 1)
        alphas = rng.standard_normal((r, n))
        h = Polynomial(n, rng.integers(0, 3, size=(4, n)), rng.standard_normal(4))
        fast = linear_fast_path(L, h, alphas)
        generic = compile(StochasticHamiltonianSystem(
            linear_lie_poisson(L), h, [Polynomial.linear(a) for a in alphas]))
        z = rng.standard_normal((10, n))
        for part in ("stratonovich_drift", "diffusion", "correction"):
            a, b = getattr(fast, part)(z), getattr(generic, part)(z)
            scale = np.maximum(np.abs(b), 1e-300)
            rel = np.where(np.abs(b) > 0, np.abs(a - b) / scale, np.abs(a - b))
            worst = max(worst, float(np.max(rel, initial=0.0)))
    assert acceptance_report(7, "linear fast path", worst < 1e-8,
                             f"worst rel. err {worst:.1e} over 50 systems")
