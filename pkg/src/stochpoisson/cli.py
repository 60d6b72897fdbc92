"""Command-line entry point.

    stochpoisson simulate <config> [--seed N] [--out-dir DIR]
    stochpoisson check <config> [--out-dir DIR]
    stochpoisson audit <config> [--out-dir DIR]
    stochpoisson list-models

Exit status: 0 on success, 1 on a configuration error (the message names
the field), 2 when more paths blew up than ``max_failure_fraction`` allows.
The subcommand overrides the ``mode`` key of the config.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path
from typing import List, Optional

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigurationError, StochPoissonError
from .geometry import Polynomial, as_scalar_field
from .integrate import Monitor, casimir_monitor, run_ensemble, write_path_csv
from .models import ModelInstance, compatibility_report, get_model, list_models, poly_field
from .poisson import antisymmetry_residual, check_jacobi
from .sde import StochasticHamiltonianSystem, compile

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2


def _dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def prepare(cfg: RunConfig):
    """Resolve the model and every config-level field that depends on it."""
    desc = get_model(cfg.model)
    m = desc.dims(cfg.params)
    if cfg.mode == "simulate":
        if cfg.initial is None:
            raise ConfigurationError("an initial point is required to simulate", field="initial")
        if len(cfg.initial) != m:
            raise ConfigurationError(f"has {len(cfg.initial)} coordinates, model {cfg.model} "
                                     f"has dimension {m}", field="initial")
    h = None
    if isinstance(cfg.hamiltonian, dict):
        h = as_scalar_field(poly_field(cfg.hamiltonian, m, name="hamiltonian"))
    elif cfg.hamiltonian == "zero":
        h = as_scalar_field(Polynomial.constant(m, 0.0, name="zero"))
    noise = None
    if cfg.noise != "default":
        noise = [as_scalar_field(poly_field(t, m, name=f"noise[{i}]"))
                 for i, t in enumerate(cfg.noise)]
    for i, mon in enumerate(cfg.monitors):
        if isinstance(mon, dict):
            poly_field(mon["table"], m, name=f"monitors[{i}].table")
    inst = desc.build(cfg.params)
    return desc, inst, (inst.h if h is None else h), (inst.noise if noise is None else noise)


def _monitors(cfg: RunConfig, inst: ModelInstance) -> List[Monitor]:
    out = []
    for i, mon in enumerate(cfg.monitors):
        if isinstance(mon, str):
            if mon not in inst.casimirs:
                raise ConfigurationError(f"model {inst.name} has no Casimir named {mon!r}; "
                                         f"known: {sorted(inst.casimirs)}", field=f"monitors[{i}]")
            out.append(casimir_monitor(inst.P, inst.casimirs[mon], name=mon))
            continue
        f = as_scalar_field(poly_field(mon["table"], inst.m, name=f"monitors[{i}].table"))
        if mon.get("casimir", False):
            out.append(casimir_monitor(inst.P, f, name=mon["name"]))
        else:
            out.append(Monitor(mon["name"], f))
    return out


def simulate(cfg: RunConfig, out_dir: Optional[str] = None) -> int:
    desc, inst, h, noise = prepare(cfg)
    monitors = _monitors(cfg, inst)
    dyn = compile(StochasticHamiltonianSystem(inst.P, h, noise), half=cfg.ito_half)
    stats = run_ensemble(dyn, np.asarray(cfg.initial), cfg.integrator, cfg.n_paths,
                         monitors=monitors, record_every=cfg.record_every,
                         keep_paths=cfg.keep_paths, workers=cfg.workers)
    paths_file = cfg.output_path("paths", out_dir)
    if stats.paths:
        paths_file.parent.mkdir(parents=True, exist_ok=True)
        for k, path in enumerate(stats.paths):
            target = paths_file if len(stats.paths) == 1 else \
                paths_file.with_name(f"{paths_file.stem}_{k}{paths_file.suffix}")
            write_path_csv(path, target)
    summary = {
        "model": inst.name,
        "dimension": inst.m,
        "integrator": {"scheme": cfg.scheme, "dt": cfg.dt, "steps": cfg.steps, "seed": cfg.seed},
        "ito_half": cfg.ito_half,
        "casimir_checks": {mon.name: mon.probe_residual for mon in monitors
                           if mon.probe_residual is not None},
        **stats.to_dict(),
    }
    stats_file = cfg.output_path("stats", out_dir)
    _dump(summary, stats_file)
    print(f"{inst.name}: {stats.n_completed}/{stats.n_paths} paths completed, "
          f"stats written to {stats_file}")
    for name, value in stats.monitor_drift.items():
        print(f"  monitor {name}: max relative drift {value:.3e}")
    if stats.failure_fraction > cfg.max_failure_fraction:
        first = stats.failures[0]
        print(f"error: {stats.n_failed} of {stats.n_paths} paths blew up (first: path {first[0]} "
              f"at step {first[1]}); allowed fraction {cfg.max_failure_fraction}", file=sys.stderr)
        return EXIT_BLOWUP
    return EXIT_OK


def run_checks(cfg: RunConfig, inst: ModelInstance, jacobi_expected: bool) -> dict:
    pts = np.random.default_rng(cfg.check_seed).standard_normal((cfg.check_points, inst.m))
    tol = cfg.tolerances
    checks = {}

    def add(name, value, limit, **extra):
        checks[name] = {"value": float(value), "tolerance": float(limit),
                        "passed": bool(value <= limit), **extra}

    add("antisymmetry", np.max(antisymmetry_residual(inst.P, pts)), tol["antisymmetry"])
    report = check_jacobi(inst.P, pts)
    add("jacobi", report.max(), tol["jacobi"], analytic=report.analytic,
        expected_to_pass=jacobi_expected)
    if inst.algebroid is not None:
        comp = compatibility_report(inst, pts[:, : inst.algebroid.n])
        add("compatibility", comp.max(), tol["compatibility"])
    for name, c in inst.casimirs.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mon = casimir_monitor(inst.P, c, name=name)
        add(f"casimir:{name}", mon.probe_residual, tol["casimir"])
    return checks


def check(cfg: RunConfig, out_dir: Optional[str] = None) -> int:
    desc, inst, _, _ = prepare(cfg)
    checks = run_checks(cfg, inst, desc.jacobi_consistent)
    target = cfg.output_path("check", out_dir)
    _dump({"model": inst.name, "points": cfg.check_points, "checks": checks}, target)
    for name, c in checks.items():
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status} {name}: {c['value']:.3e} (tol {c['tolerance']:.1e})")
    print(f"report written to {target}")
    return EXIT_OK


def audit_mode(cfg: RunConfig, out_dir: Optional[str] = None) -> int:
    desc, inst, _, _ = prepare(cfg)
    report = inst.audit(n_points=cfg.audit_points, seed=cfg.audit_seed, tol=cfg.audit_tol)
    target = cfg.output_path("audit", out_dir)
    _dump({"model": inst.name, **report.to_dict()}, target)
    print(f"{inst.name}: {len(report.flagged)} of {len(report.records)} terms flagged "
          f"(tol {cfg.audit_tol:g}, {cfg.audit_points} points)")
    for rec in report.flagged:
        print(f"  [{rec.status}] {rec.kind} {rec.line} ({rec.part}): {rec.term}  "
              f"rel. err {rec.relative:.3g}")
    print(f"report written to {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochpoisson",
                                     description="Stochastic Hamiltonian dynamics on Poisson manifolds")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "run an ensemble and write paths and statistics"),
                       ("check", "antisymmetry, Jacobi, compatibility and Casimir checks"),
                       ("audit", "compare expanded equations with the compiled coefficients")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="YAML run configuration")
        p.add_argument("--out-dir", help="write every output file into this directory")
        if name == "simulate":
            p.add_argument("--seed", type=int, help="override integrator.seed")
    sub.add_parser("list-models", help="print the model registry with parameter schemas")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-models":
        sys.stdout.write(list_models())
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        cfg.mode = args.command
        if getattr(args, "seed", None) is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigurationError("seed must be an unsigned 64-bit integer", field="--seed")
            cfg.seed = args.seed
        handler = {"simulate": simulate, "check": check, "audit": audit_mode}[args.command]
        return handler(cfg, args.out_dir)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StochPoissonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
