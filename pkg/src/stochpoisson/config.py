"""Run configuration: a single YAML document validated before any computation.

Layout (every key except ``model`` optional)::

    mode: simulate              # simulate | check | audit
    model:
      name: so3_lie_poisson
      params: {inertia: [1, 2, 3]}
    hamiltonian: default        # default | zero | {"e1,..,em": coefficient}
    noise: default              # default | [] | list of polynomial tables
    initial: [1.0, 2.0, 3.0]
    integrator: {scheme: stratonovich_heun, dt: 1.0e-3, steps: 1000, seed: 42}
    n_paths: 100
    record_every: 100
    keep_paths: 1
    workers: 1
    ito_half: true
    max_failure_fraction: 0.0
    monitors: [casimir]         # model Casimir names or {name, table, casimir}
    tolerances: {antisymmetry: 1.0e-12, jacobi: 1.0e-7, compatibility: 1.0e-7, casimir: 1.0e-8}
    check: {points: 100, seed: 0}
    audit: {points: 50, seed: 0, tol: 1.0e-6}
    outputs: {paths: paths.csv, stats: stats.json, audit: audit.json, check: check.json}

Relative output paths are resolved against the config file's directory.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import yaml

from .errors import ConfigurationError
from .integrate import SCHEMES, IntegratorConfig

MODES = ("simulate", "check", "audit")
DEFAULT_OUTPUTS = {"paths": "paths.csv", "stats": "stats.json", "audit": "audit.json",
                   "check": "check.json"}
DEFAULT_TOLERANCES = {"antisymmetry": 1e-12, "jacobi": 1e-7, "compatibility": 1e-7,
                      "casimir": 1e-8}
TOP_LEVEL = {"mode", "model", "hamiltonian", "noise", "initial", "integrator", "n_paths",
             "record_every", "keep_paths", "workers", "ito_half", "max_failure_fraction",
             "monitors", "tolerances", "check", "audit", "outputs"}


def _number(value, name, positive=False, allow_zero=True):
    if isinstance(value, bool):
        raise ConfigurationError(f"expected a number, got {value!r}", field=name)
    if isinstance(value, str):
        # YAML 1.1 reads "1e-3" (no decimal point) as a string
        try:
            value = float(value)
        except ValueError:
            raise ConfigurationError(f"expected a number, got {value!r}", field=name) from None
    if not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigurationError(f"expected a finite number, got {value!r}", field=name)
    if positive and (value < 0 or (value == 0 and not allow_zero)):
        raise ConfigurationError(f"must be {'positive' if not allow_zero else 'non-negative'}, "
                                 f"got {value!r}", field=name)
    return float(value)


def _integer(value, name, minimum=0):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigurationError(f"expected an integer >= {minimum}, got {value!r}", field=name)
    return int(value)


def _mapping(value, name):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"expected a mapping, got {value!r}", field=name)
    return value


def _known(mapping, allowed, name):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown key(s) {unknown}; expected {sorted(allowed)}",
                                 field=f"{name}.{unknown[0]}" if name else unknown[0])


@dataclass
class RunConfig:
    model: str
    params: dict = field(default_factory=dict)
    mode: str = "simulate"
    hamiltonian: Union[str, dict] = "default"
    noise: Union[str, list] = "default"
    initial: Optional[List[float]] = None
    scheme: str = "stratonovich_heun"
    dt: float = 1e-3
    steps: int = 1000
    seed: int = 0
    n_paths: int = 1
    record_every: Optional[int] = None
    keep_paths: int = 1
    workers: int = 1
    ito_half: bool = True
    max_failure_fraction: float = 0.0
    monitors: list = field(default_factory=list)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    check_points: int = 100
    check_seed: int = 0
    audit_points: int = 50
    audit_seed: int = 0
    audit_tol: float = 1e-6
    outputs: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUTS))
    base_dir: str = "."

    @property
    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.scheme, self.dt, self.steps, self.seed)

    def output_path(self, key: str, out_dir: Optional[str] = None) -> Path:
        name = self.outputs.get(key, DEFAULT_OUTPUTS[key])
        if out_dir is not None:
            return Path(out_dir) / Path(name).name
        path = Path(name)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def to_dict(self) -> dict:
        """Inverse of :func:`parse_config` (up to defaults)."""
        d = asdict(self)
        return {
            "mode": d["mode"],
            "model": {"name": d["model"], "params": copy.deepcopy(d["params"])},
            "hamiltonian": d["hamiltonian"],
            "noise": d["noise"],
            "initial": d["initial"],
            "integrator": {"scheme": d["scheme"], "dt": d["dt"], "steps": d["steps"],
                           "seed": d["seed"]},
            "n_paths": d["n_paths"],
            "record_every": d["record_every"],
            "keep_paths": d["keep_paths"],
            "workers": d["workers"],
            "ito_half": d["ito_half"],
            "max_failure_fraction": d["max_failure_fraction"],
            "monitors": d["monitors"],
            "tolerances": d["tolerances"],
            "check": {"points": d["check_points"], "seed": d["check_seed"]},
            "audit": {"points": d["audit_points"], "seed": d["audit_seed"], "tol": d["audit_tol"]},
            "outputs": d["outputs"],
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def parse_config(data: dict, base_dir: str = ".") -> RunConfig:
    """Validate the structure of a config mapping (model-level checks come later)."""
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping", field="config")
    _known(data, TOP_LEVEL, "")
    mode = data.get("mode", "simulate")
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; expected one of {MODES}", field="mode")

    model = data.get("model")
    if isinstance(model, str):
        model = {"name": model}
    model = _mapping(model, "model")
    _known(model, {"name", "params"}, "model")
    if not isinstance(model.get("name"), str):
        raise ConfigurationError("model name is required", field="model.name")
    params = _mapping(model.get("params"), "model.params")

    ham = data.get("hamiltonian", "default")
    if not (ham in ("default", "zero") or isinstance(ham, dict)):
        raise ConfigurationError("expected default, zero or a polynomial table",
                                 field="hamiltonian")
    noise = data.get("noise", "default")
    if noise is None:
        noise = []
    if not (noise == "default" or isinstance(noise, list)):
        raise ConfigurationError("expected default or a list of polynomial tables", field="noise")

    initial = data.get("initial")
    if initial is not None:
        if not isinstance(initial, list):
            raise ConfigurationError("expected a list of numbers", field="initial")
        initial = [_number(v, f"initial[{i}]") for i, v in enumerate(initial)]

    integ = _mapping(data.get("integrator"), "integrator")
    _known(integ, {"scheme", "dt", "steps", "seed"}, "integrator")
    scheme = integ.get("scheme", "stratonovich_heun")
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}",
                                 field="integrator.scheme")
    dt = _number(integ.get("dt", 1e-3), "integrator.dt")
    if dt <= 0:
        raise ConfigurationError(f"must be positive, got {dt!r}", field="integrator.dt")
    steps = _integer(integ.get("steps", 1000), "integrator.steps", 1)
    seed = _integer(integ.get("seed", 0), "integrator.seed", 0)
    if seed >= 2 ** 64:
        raise ConfigurationError("seed must fit in 64 bits", field="integrator.seed")
    if not math.isfinite(dt * steps):
        raise ConfigurationError("dt * steps overflows", field="integrator.dt")

    record_every = data.get("record_every")
    if record_every is not None:
        record_every = _integer(record_every, "record_every", 1)

    ito_half = data.get("ito_half", True)
    if not isinstance(ito_half, bool):
        raise ConfigurationError("expected true or false", field="ito_half")

    frac = _number(data.get("max_failure_fraction", 0.0), "max_failure_fraction", positive=True)
    if frac > 1:
        raise ConfigurationError("must lie in [0, 1]", field="max_failure_fraction")

    monitors = data.get("monitors") or []
    if not isinstance(monitors, list):
        raise ConfigurationError("expected a list", field="monitors")
    for i, mon in enumerate(monitors):
        if isinstance(mon, str):
            continue
        mon = _mapping(mon, f"monitors[{i}]")
        _known(mon, {"name", "table", "casimir"}, f"monitors[{i}]")
        if not isinstance(mon.get("name"), str) or not isinstance(mon.get("table"), dict):
            raise ConfigurationError("monitor needs a name and a polynomial table",
                                     field=f"monitors[{i}]")

    tol = dict(DEFAULT_TOLERANCES)
    given = _mapping(data.get("tolerances"), "tolerances")
    _known(given, DEFAULT_TOLERANCES, "tolerances")
    for k, v in given.items():
        tol[k] = _number(v, f"tolerances.{k}", positive=True)

    check = _mapping(data.get("check"), "check")
    _known(check, {"points", "seed"}, "check")
    aud = _mapping(data.get("audit"), "audit")
    _known(aud, {"points", "seed", "tol"}, "audit")

    outputs = dict(DEFAULT_OUTPUTS)
    given = _mapping(data.get("outputs"), "outputs")
    _known(given, DEFAULT_OUTPUTS, "outputs")
    for k, v in given.items():
        if not isinstance(v, str) or not v:
            raise ConfigurationError("expected a file path", field=f"outputs.{k}")
        outputs[k] = v

    return RunConfig(
        model=model["name"], params=copy.deepcopy(params), mode=mode, hamiltonian=ham,
        noise=noise, initial=initial, scheme=scheme, dt=dt, steps=steps, seed=seed,
        n_paths=_integer(data.get("n_paths", 1), "n_paths", 1),
        record_every=record_every,
        keep_paths=_integer(data.get("keep_paths", 1), "keep_paths", 0),
        workers=_integer(data.get("workers", 1), "workers", 1),
        ito_half=ito_half, max_failure_fraction=frac, monitors=monitors, tolerances=tol,
        check_points=_integer(check.get("points", 100), "check.points", 1),
        check_seed=_integer(check.get("seed", 0), "check.seed", 0),
        audit_points=_integer(aud.get("points", 50), "audit.points", 1),
        audit_seed=_integer(aud.get("seed", 0), "audit.seed", 0),
        audit_tol=_number(aud.get("tol", 1e-6), "audit.tol", positive=True),
        outputs=outputs, base_dir=str(base_dir),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}", field="config") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML: {exc}", field="config") from None
    return parse_config(data, base_dir=str(path.parent))


def parse_yaml(text: str, base_dir: str = ".") -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML: {exc}", field="config") from None
    return parse_config(data, base_dir=base_dir)
