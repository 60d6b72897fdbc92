"""Time stepping of compiled dynamics and Monte Carlo ensembles.

Two schemes ship: Euler-Maruyama on the Ito form and the Heun
predictor-corrector on the Stratonovich form.  Both run on a batch of paths
at once; Brownian increments come from the counter-based stream in
:mod:`stochpoisson.rng`, so path ``i`` of an ensemble seeded with ``seed``
is the same whatever the batch, chunking or worker count.  A single path
run with ``seed`` equals path 0 of the ensemble with that seed.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BlowUpError, ConfigurationError, FieldEvaluationError
from .geometry import Polynomial, ScalarField, as_points, as_scalar_field
from .poisson import PoissonStructure, bracket
from .rng import UINT64_MAX, brownian_increments, derive_seed
from .sde import CompiledDynamics

SCHEMES = ("euler_maruyama", "stratonovich_heun")
CHUNK = 2048
CASIMIR_TOL = 1e-8


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str
    dt: float
    steps: int
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}",
                                     field="scheme")
        dt = self.dt
        if isinstance(dt, bool) or not isinstance(dt, (int, float, np.floating, np.integer)):
            raise ConfigurationError(f"dt must be a number, got {dt!r}", field="dt")
        if not (np.isfinite(dt) and dt > 0):
            raise ConfigurationError(f"dt must be positive and finite, got {dt!r}", field="dt")
        steps = self.steps
        if isinstance(steps, bool) or not isinstance(steps, (int, np.integer)) or steps < 1:
            raise ConfigurationError(f"steps must be a positive integer, got {steps!r}",
                                     field="steps")
        if not np.isfinite(float(dt) * int(steps)):
            raise ConfigurationError("dt * steps overflows", field="dt")
        seed = self.seed
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed <= UINT64_MAX:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {seed!r}",
                                     field="seed")
        object.__setattr__(self, "dt", float(dt))
        object.__setattr__(self, "steps", int(steps))
        object.__setattr__(self, "seed", int(seed))

    @property
    def horizon(self) -> float:
        return self.dt * self.steps

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)


@dataclass
class SamplePath:
    """``times`` (steps+1,), ``states`` (steps+1, m), ``increments`` (steps, r)."""

    times: np.ndarray
    states: np.ndarray
    increments: np.ndarray

    def to_csv(self, file) -> None:
        write_path_csv(self, file)


@dataclass
class Monitor:
    """Scalar field whose relative drift is tracked along every path."""

    name: str
    field: ScalarField
    verified: Optional[bool] = None
    probe_residual: Optional[float] = None


@dataclass
class EnsembleStats:
    """Moments over completed paths at the recorded times.

    ``stderr = std / sqrt(n)`` with the sample (ddof=1) standard deviation;
    zero for a single path.  ``monitor_drift[name]`` is the maximum over
    completed paths of ``max_t |c(z_t) - c(z_0)| / (1 + |c(z_0)|)``.
    """

    n_paths: int
    n_completed: int
    times: np.ndarray
    mean: np.ndarray
    second_moment: np.ndarray
    stderr: np.ndarray
    monitor_drift: Dict[str, float]
    path_drift: Dict[str, np.ndarray]
    failures: List[Tuple[int, int]]
    paths: List[SamplePath] = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    @property
    def failure_fraction(self) -> float:
        return self.n_failed / self.n_paths

    def to_dict(self) -> dict:
        def clean(a):
            return [[_json_float(v) for v in row] for row in np.atleast_2d(a)]

        return {
            "n_paths": self.n_paths,
            "n_completed": self.n_completed,
            "n_failed": self.n_failed,
            "failures": [{"path": p, "step": s} for p, s in self.failures],
            "times": [_json_float(t) for t in self.times],
            "mean": clean(self.mean),
            "second_moment": clean(self.second_moment),
            "stderr": clean(self.stderr),
            "monitor_drift": {k: _json_float(v) for k, v in self.monitor_drift.items()},
        }


def _json_float(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _monitor(m) -> Monitor:
    if isinstance(m, Monitor):
        return m
    f = as_scalar_field(m)
    return Monitor(f.name, f)


def casimir_monitor(P: PoissonStructure, c, name: str = "casimir", n_probes: int = 10,
                    seed: int = 0) -> Monitor:
    """Monitor for a candidate Casimir ``c``.

    ``{c, p}`` is evaluated for ``n_probes`` random quadratic probe fields at
    random points; a residual above ``1e-8`` (relative to the size of
    ``Lambda``, ``grad c`` and ``grad p``) warns that ``c`` is not a Casimir.
    """
    c = as_scalar_field(c, P.m)
    m = P.m
    rng = np.random.default_rng(seed)
    points = rng.standard_normal((8, m))
    exps = [tuple(0 for _ in range(m))]
    exps += [tuple(int(j == i) for j in range(m)) for i in range(m)]
    exps += [tuple(int(j == i) + int(j == k) for j in range(m)) for i in range(m) for k in range(i, m)]
    worst = 0.0
    for _ in range(n_probes):
        probe = Polynomial(m, exps, rng.standard_normal(len(exps)))
        value = np.abs(bracket(P, c, probe, points))
        scale = (np.max(np.abs(P.matrix(points)), axis=(-1, -2))
                 * np.linalg.norm(c.gradient(points), axis=-1)
                 * np.linalg.norm(probe.grad(points), axis=-1))
        worst = max(worst, float(np.max(value / np.maximum(scale, 1.0))))
    verified = worst < CASIMIR_TOL
    if not verified:
        warnings.warn(f"{name}: not a Casimir of {P.name} (probe bracket {worst:.3g})",
                      stacklevel=2)
    return Monitor(name, c, verified=verified, probe_residual=worst)


def _per_row(fn, *arrays, shape=()):
    """``fn`` on the whole batch; on failure row by row, failing rows as NaN.

    ``shape`` is the per-row output shape, used when every row fails.
    """
    try:
        return np.asarray(fn(*arrays), dtype=float)
    except FieldEvaluationError:
        pass
    out = None
    n = len(arrays[0])
    for row in range(n):
        try:
            v = np.asarray(fn(*(a[row:row + 1] for a in arrays)), dtype=float)
        except FieldEvaluationError:
            continue
        if out is None:
            out = np.full((n,) + v.shape[1:], np.nan)
        out[row] = v[0]
    return np.full((n,) + tuple(shape), np.nan) if out is None else out


def _contract(sigma, dB):
    return np.einsum("nis,ns->ni", sigma, dB)


def _stepper(dyn: CompiledDynamics, scheme: str, dt: float):
    if scheme == "euler_maruyama":
        def step(z, dB):
            return z + dyn.ito_drift(z) * dt + _contract(dyn.diffusion(z), dB)
    else:
        def step(z, dB):
            a0 = dyn.stratonovich_drift(z)
            s0 = dyn.diffusion(z)
            pred = z + a0 * dt + _contract(s0, dB)
            a1 = dyn.stratonovich_drift(pred)
            s1 = dyn.diffusion(pred)
            return z + 0.5 * (a0 + a1) * dt + _contract(0.5 * (s0 + s1), dB)
    return step


@dataclass
class _BatchResult:
    recorded: np.ndarray        # (N, len(record), m)
    failed_step: np.ndarray     # (N,), -1 for completed paths
    drift: np.ndarray           # (N, n_monitors)
    full: Optional[np.ndarray]  # (keep, steps+1, m)
    increments: Optional[np.ndarray]


def _simulate(dyn, z0, cfg, seeds, record, monitors=(), keep=0, increments=None):
    """Advance ``len(seeds)`` paths from ``z0``.

    A path fails at step ``k`` (1-based) when state ``k`` is non-finite or a
    field cannot be evaluated there; it is then frozen and excluded from
    later work.
    """
    n, m, r = len(seeds), dyn.m, dyn.r
    step = _stepper(dyn, cfg.scheme, cfg.dt)
    z = np.repeat(as_points(z0, m).reshape(1, m), n, axis=0)
    record = np.asarray(record, dtype=int)
    slot = {int(k): j for j, k in enumerate(record)}
    recorded = np.full((n, len(record), m), np.nan)
    failed = np.full(n, -1, dtype=int)
    keep = min(keep, n)
    full = np.full((keep, cfg.steps + 1, m), np.nan) if keep else None
    kept_inc = np.zeros((keep, cfg.steps, r)) if keep else None
    c0 = np.array([mon.field(z) for mon in monitors]).T.reshape(n, len(monitors))
    drift = np.zeros((n, len(monitors)))
    active = np.arange(n)
    if 0 in slot:
        recorded[:, slot[0]] = z
    if keep:
        full[:, 0] = z[:keep]

    for k in range(cfg.steps):
        if not len(active):
            break
        if increments is not None:
            dB = increments[active, k]
        else:
            dB = brownian_increments(seeds[active], k, r, cfg.dt)
        za = _per_row(step, z[active], dB, shape=(m,))
        if monitors:
            ok = np.all(np.isfinite(za), axis=-1)
            safe = np.where(ok[:, None], za, 0.0)
            cvals = np.stack([_per_row(mon.field, safe) for mon in monitors], axis=-1)
            cvals[~ok] = np.nan
            c = c0[active]
            rel = np.abs(cvals - c) / (1.0 + np.abs(c))
            drift[active] = np.maximum(drift[active], rel)
            ok &= np.all(np.isfinite(rel), axis=-1)
        else:
            ok = np.all(np.isfinite(za), axis=-1)
        z[active] = za
        failed[active[~ok]] = k + 1
        kept = active < keep
        if kept.any():
            full[active[kept], k + 1] = za[kept]
            kept_inc[active[kept], k] = dB[kept]
        active = active[ok]
        if k + 1 in slot:
            recorded[active, slot[k + 1]] = z[active]

    drift[failed >= 0] = np.nan
    return _BatchResult(recorded, failed, drift, full, kept_inc)


def _single(dyn, z0, cfg, scheme, increments):
    if cfg.scheme != scheme:
        raise ConfigurationError(
            f"{scheme} called with a config for {cfg.scheme}", field="scheme")
    inc = None
    if increments is not None:
        inc = np.asarray(increments, dtype=float)
        if inc.shape != (cfg.steps, dyn.r):
            raise ConfigurationError(
                f"increments must have shape {(cfg.steps, dyn.r)}, got {inc.shape}",
                field="increments")
        inc = inc[None]
    seeds = derive_seed(cfg.seed, np.zeros(1, dtype=np.uint64))
    res = _simulate(dyn, z0, cfg, seeds, record=[], keep=1, increments=inc)
    if res.failed_step[0] >= 0:
        k = int(res.failed_step[0])
        raise BlowUpError(f"{scheme}: non-finite state at step {k}", step=k)
    return SamplePath(cfg.times(), res.full[0], res.increments[0])


def euler_maruyama(dyn: CompiledDynamics, z0, cfg: IntegratorConfig,
                   increments=None) -> SamplePath:
    """``z_{k+1} = z_k + ito_drift(z_k) dt + diffusion(z_k) dB_k``.

    ``increments`` (steps, r) replaces the seeded Brownian increments.
    """
    return _single(dyn, z0, cfg, "euler_maruyama", increments)


def stratonovich_heun(dyn: CompiledDynamics, z0, cfg: IntegratorConfig,
                      increments=None) -> SamplePath:
    """Heun predictor-corrector on the Stratonovich drift and diffusion."""
    return _single(dyn, z0, cfg, "stratonovich_heun", increments)


def integrate(dyn: CompiledDynamics, z0, cfg: IntegratorConfig, increments=None) -> SamplePath:
    """Dispatch on ``cfg.scheme``."""
    return _single(dyn, z0, cfg, cfg.scheme, increments)


def integrate_batch(dyn: CompiledDynamics, z0, cfg: IntegratorConfig, increments) -> np.ndarray:
    """States ``(N, steps + 1, m)`` of paths driven by supplied increments ``(N, steps, r)``.

    Rows of a path after its blow-up step stay NaN.
    """
    inc = np.asarray(increments, dtype=float)
    if inc.ndim != 3 or inc.shape[1:] != (cfg.steps, dyn.r):
        raise ConfigurationError(
            f"increments must have shape (N, {cfg.steps}, {dyn.r}), got {inc.shape}",
            field="increments")
    seeds = np.zeros(len(inc), dtype=np.uint64)
    return _simulate(dyn, z0, cfg, seeds, record=[], keep=len(inc), increments=inc).full


def record_steps(steps: int, every: Optional[int] = None) -> np.ndarray:
    """Step indices ``0, every, 2 every, ..`` always including the last step."""
    every = max(1, steps // 10) if every is None else int(every)
    if every < 1:
        raise ConfigurationError("record interval must be positive", field="record_every")
    idx = list(range(0, steps + 1, every))
    if idx[-1] != steps:
        idx.append(steps)
    return np.asarray(idx)


def run_ensemble(dyn: CompiledDynamics, z0, cfg: IntegratorConfig, n_paths: int,
                 monitors: Sequence = (), record_every: Optional[int] = None,
                 keep_paths: int = 0, workers: int = 1) -> EnsembleStats:
    """Monte Carlo statistics over ``n_paths`` independently seeded paths.

    Path ``i`` uses ``derive_seed(cfg.seed, i)``.  Paths are processed in
    fixed chunks of ``CHUNK``; ``workers > 1`` runs chunks on a thread pool.
    Chunk composition does not depend on ``workers`` and the reduction is
    done over the path-ordered arrays, so the result is bit-identical for
    any worker count.  Failed paths are listed as ``(path, step)`` and left
    out of the moments.
    """
    if isinstance(n_paths, bool) or not isinstance(n_paths, (int, np.integer)) or n_paths < 1:
        raise ConfigurationError(f"n_paths must be a positive integer, got {n_paths!r}",
                                 field="n_paths")
    mons = [_monitor(mon) for mon in monitors]
    names = [mon.name for mon in mons]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"duplicate monitor names {names}", field="monitors")
    record = record_steps(cfg.steps, record_every)
    seeds = derive_seed(cfg.seed, np.arange(n_paths, dtype=np.uint64))
    bounds = [(a, min(a + CHUNK, n_paths)) for a in range(0, n_paths, CHUNK)]

    def work(bound):
        a, b = bound
        return _simulate(dyn, z0, cfg, seeds[a:b], record, mons, keep=max(0, keep_paths - a))

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(bd) for bd in bounds]

    recorded = np.concatenate([p.recorded for p in parts])
    failed = np.concatenate([p.failed_step for p in parts])
    drift = np.concatenate([p.drift for p in parts])
    done = failed < 0
    n_done = int(done.sum())
    states = recorded[done]
    m = dyn.m
    if n_done:
        mean = states.mean(axis=0)
        second = (states ** 2).mean(axis=0)
        stderr = (states.std(axis=0, ddof=1) / np.sqrt(n_done)) if n_done > 1 else np.zeros_like(mean)
    else:
        mean = second = stderr = np.full((len(record), m), np.nan)

    times = cfg.dt * record
    paths = []
    for p in parts:
        if p.full is None:
            continue
        for j in range(len(p.full)):
            paths.append(SamplePath(cfg.times(), p.full[j], p.increments[j]))
    paths = paths[:keep_paths]

    monitor_drift = {}
    path_drift = {}
    for j, name in enumerate(names):
        path_drift[name] = drift[:, j]
        monitor_drift[name] = float(np.max(drift[done, j])) if n_done else float("nan")
    failures = [(int(i), int(failed[i])) for i in np.flatnonzero(~done)]
    return EnsembleStats(n_paths, n_done, times, mean, second, stderr, monitor_drift,
                         path_drift, failures, paths)


def write_path_csv(path: SamplePath, file) -> None:
    """CSV with header ``t,z1,..,zm`` and 17 significant digits."""
    m = path.states.shape[1]
    header = ",".join(["t"] + [f"z{i + 1}" for i in range(m)])
    data = np.column_stack([path.times, path.states])
    np.savetxt(file, data, delimiter=",", header=header, comments="", fmt="%.17g")


def read_path_csv(file) -> Tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(file, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


def stats_to_text(stats: EnsembleStats) -> str:
    """JSON summary with sorted keys; floats written in round-trip form."""
    return json.dumps(stats.to_dict(), sort_keys=True, indent=2) + "\n"


def write_stats(stats: EnsembleStats, file) -> None:
    with open(file, "w", encoding="utf-8") as fh:
        fh.write(stats_to_text(stats))
