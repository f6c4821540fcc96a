"""Experiment configuration: JSON in, validated dataclasses out.

Schema (all keys except ``model``, ``grid`` and ``solver`` are optional)::

    {
      "name": "exp1",
      "model": {"name": "double_well_1d", "params": {"kappa": 0.5, "D": 0.15}},
      "grid": [{"name": "x", "min": -2.0, "max": 2.0, "n_points": 21}],
      "scheme": "finite_difference",            # or "rates"
      "boundary": {"tag": "reflecting", "rate": 0.0},
      "solver": {"name": "q_block", "dt": 0.1, "n_steps": 40, ...},
      "initial": {"kind": "delta", "center": [0.0]},
      "output": {"prefix": "exp1"}
    }

Solver keys: ``dt``, ``n_steps``, ``record_every``; ``eta_max``, ``d_eta``,
``offset`` (number or ``"auto"``), ``mode`` (``restart``/``direct``) for
``q_schrod``; ``n_samples``, ``seed``, ``sde_dt`` for ``sde_mc``;
``subnormalize`` for ``q_block``. Initial conditions: ``delta`` (``center``),
``gaussian`` (``center``, ``width``) or ``file`` (``path`` to a whitespace or
comma separated vector, resolved relative to the config file).
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ._exceptions import ConfigError, ValidationError
from .generator import BC_TAGS, SCHEMES, BoundaryCondition
from .grid import MODELS, Axis, Grid

__all__ = [
    "SOLVERS",
    "ExperimentConfig",
    "SolverSpec",
    "InitialSpec",
    "load_config",
    "load_preset",
    "preset_names",
    "sweep_preset_names",
    "load_sweep_preset",
    "config_from_dict",
    "apply_overrides",
]

SOLVERS = ("classical_expm", "classical_euler", "q_block", "q_lcu", "q_schrod", "sde_mc", "analytic_steady")
IC_KINDS = ("delta", "gaussian", "file")


@dataclass(frozen=True)
class SolverSpec:
    name: str
    dt: float = 0.1
    n_steps: int = 40
    record_every: int = 1
    eta_max: float = 10.0
    d_eta: float = 0.01
    offset: float | str = "auto"
    mode: str = "restart"
    n_samples: int = 100_000
    seed: int = 0
    sde_dt: float = 1e-3
    subnormalize: bool = True


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "delta"
    center: tuple = (0.0,)
    width: float = 0.2
    path: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: str
    model_params: dict
    axes: tuple
    solver: SolverSpec
    scheme: str = "finite_difference"
    boundary: BoundaryCondition = field(default_factory=BoundaryCondition)
    initial: InitialSpec = field(default_factory=InitialSpec)
    prefix: str | None = None
    base_dir: str = "."

    @property
    def grid(self) -> Grid:
        return Grid(self.axes)

    @property
    def output_prefix(self) -> str:
        return self.prefix or self.name

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": {"name": self.model, "params": dict(self.model_params)},
            "grid": [{"name": a.name, "min": a.x_min, "max": a.x_max, "n_points": a.n_points} for a in self.axes],
            "scheme": self.scheme,
            "boundary": {"tag": self.boundary.tag, "rate": self.boundary.rate},
            "solver": asdict(self.solver),
            "initial": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.initial).items()},
            "output": {"prefix": self.output_prefix},
        }


def _need(d, key, where):
    if not isinstance(d, dict):
        raise ConfigError("expected an object", where)
    if key not in d:
        raise ConfigError("missing required key", f"{where}.{key}" if where else key)
    return d[key]


def _number(value, where, *, positive=False, integer=False, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", where)
    if integer and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", where)
    if not np.isfinite(value):
        raise ConfigError("must be finite", where)
    if positive and not value > 0:
        raise ConfigError(f"must be > 0, got {value!r}", where)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value!r}", where)
    return int(value) if integer else float(value)


def _solver(d) -> SolverSpec:
    name = _need(d, "name", "solver")
    if name not in SOLVERS:
        raise ConfigError(f"unknown solver {name!r}; expected one of {SOLVERS}", "solver.name")
    known = set(SolverSpec.__dataclass_fields__)
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", "solver")
    kw = {"name": name}
    for key in ("dt", "eta_max", "d_eta", "sde_dt"):
        if key in d:
            kw[key] = _number(d[key], f"solver.{key}", positive=True)
    for key, low in (("n_steps", 0), ("record_every", 1), ("n_samples", 1), ("seed", 0)):
        if key in d:
            kw[key] = _number(d[key], f"solver.{key}", integer=True, minimum=low)
    if "offset" in d:
        off = d["offset"]
        kw["offset"] = off if off == "auto" else _number(off, "solver.offset", minimum=0)
    if "mode" in d:
        if d["mode"] not in ("restart", "direct"):
            raise ConfigError("must be 'restart' or 'direct'", "solver.mode")
        kw["mode"] = d["mode"]
    if "subnormalize" in d:
        if not isinstance(d["subnormalize"], bool):
            raise ConfigError("must be true or false", "solver.subnormalize")
        kw["subnormalize"] = d["subnormalize"]
    spec = SolverSpec(**kw)
    if name == "sde_mc":
        ratio = spec.dt / spec.sde_dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigError("solver.dt must be an integer multiple of sde_dt", "solver.sde_dt")
    if name == "q_schrod":
        n = spec.eta_max / spec.d_eta
        if abs(n - round(n)) > 1e-9 * n:
            raise ConfigError("d_eta must divide eta_max", "solver.d_eta")
    return spec


def _initial(d, ndim) -> InitialSpec:
    if d is None:
        return InitialSpec(center=(0.0,) * ndim)
    kind = d.get("kind", "delta")
    if kind not in IC_KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {IC_KINDS}", "initial.kind")
    if kind == "file":
        path = _need(d, "path", "initial")
        return InitialSpec(kind, (0.0,) * ndim, 0.0, str(path))
    center = d.get("center", [0.0] * ndim)
    if not isinstance(center, list) or len(center) != ndim:
        raise ConfigError(f"expected a list of {ndim} coordinates", "initial.center")
    center = tuple(_number(c, "initial.center") for c in center)
    width = _number(d.get("width", 0.2), "initial.width", positive=True)
    return InitialSpec(kind, center, width)


def config_from_dict(d: dict, base_dir=".") -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    model = _need(d, "model", "")
    mname = _need(model, "name", "model")
    if mname not in MODELS:
        raise ConfigError(f"unknown model {mname!r}; expected one of {sorted(MODELS)}", "model.name")
    params = model.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("expected an object", "model.params")
    try:
        MODELS[mname](**params)
    except TypeError as exc:
        raise ConfigError(str(exc), "model.params") from None
    except ValidationError as exc:
        raise ConfigError(str(exc), "model.params") from None
    grid = _need(d, "grid", "")
    if not isinstance(grid, list) or not grid:
        raise ConfigError("expected a non-empty list of axes", "grid")
    axes = []
    for i, a in enumerate(grid):
        where = f"grid[{i}]"
        try:
            lo = _number(_need(a, "min", where), f"{where}.min")
            hi = _number(_need(a, "max", where), f"{where}.max")
            if "spacing" in a:
                axes.append(Axis.from_spacing(a.get("name", f"x{i}"), lo, hi, _number(a["spacing"], f"{where}.spacing", positive=True)))
            else:
                n = _number(_need(a, "n_points", where), f"{where}.n_points", integer=True)
                axes.append(Axis(a.get("name", f"x{i}"), lo, hi, n))
        except ValidationError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), where) from None
    ndim = MODELS[mname](**params).ndim
    if ndim != len(axes):
        raise ConfigError(f"model {mname} is {ndim}-dimensional but {len(axes)} axes given", "grid")
    scheme = d.get("scheme", "finite_difference")
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}", "scheme")
    bd = d.get("boundary", {})
    tag = bd.get("tag", "reflecting")
    if tag not in BC_TAGS:
        raise ConfigError(f"unknown boundary {tag!r}; expected one of {BC_TAGS}", "boundary.tag")
    rate = _number(bd.get("rate", 0.0), "boundary.rate", minimum=0.0)
    solver = _solver(_need(d, "solver", ""))
    initial = _initial(d.get("initial"), ndim)
    prefix = d.get("output", {}).get("prefix")
    return ExperimentConfig(
        name=str(d.get("name", "experiment")),
        model=mname,
        model_params=dict(params),
        axes=tuple(axes),
        solver=solver,
        scheme=scheme,
        boundary=BoundaryCondition(tag, rate),
        initial=initial,
        prefix=prefix,
        base_dir=str(base_dir),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return config_from_dict(data, path.parent)


def preset_names() -> list:
    files = resources.files("fpqsolve.presets").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".json"))


def load_preset_dict(name: str) -> dict:
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}", "preset")
    return json.loads(resources.files("fpqsolve.presets").joinpath(f"{name}.json").read_text())


def load_preset(name: str) -> ExperimentConfig:
    return config_from_dict(load_preset_dict(name))


def sweep_preset_names() -> list:
    files = resources.files("fpqsolve.presets").joinpath("sweeps").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".json"))


def load_sweep_preset(name: str) -> dict:
    if name not in sweep_preset_names():
        raise ConfigError(f"unknown sweep preset {name!r}; available: {sweep_preset_names()}", "preset")
    return json.loads(resources.files("fpqsolve.presets").joinpath("sweeps", f"{name}.json").read_text())


def apply_overrides(d: dict, overrides: dict) -> dict:
    """Copy of ``d`` with dotted-path overrides (``"model.params.kappa": 0.3``)."""
    out = copy.deepcopy(d)
    for path, value in overrides.items():
        keys = path.split(".")
        node = out
        for k in keys[:-1]:
            if k.isdigit() and isinstance(node, list):
                node = node[int(k)]
            else:
                node = node.setdefault(k, {})
        last = keys[-1]
        if last.isdigit() and isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return out
