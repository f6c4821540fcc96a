"""Config-driven experiment runner: run, compare, sweep."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._exceptions import AliasingWarning, MeshBoundWarning, NumericalError, ValidationError
from .classical import Trajectory, euler_propagate, expm_propagate, sde_trajectory, steady_state_1d
from .config import ExperimentConfig, apply_overrides, config_from_dict, load_preset_dict
from .generator import GeneratorMatrix, ProbVector, assemble
from .grid import MODELS, eval_coefficients
from .observables import mean, moments, variance, write_moments_csv
from .quantum import run_block_euler, run_lcu, run_schrod

logger = logging.getLogger(__name__)

__all__ = [
    "RunResult",
    "ComparisonReport",
    "SweepResult",
    "build_generator",
    "initial_distribution",
    "solve",
    "run",
    "compare",
    "compare_trajectories",
    "sweep",
]


@dataclass
class RunResult:
    config: ExperimentConfig
    generator: GeneratorMatrix
    trajectory: Trajectory
    warnings: list = field(default_factory=list)

    @property
    def moments(self):
        return moments(self.trajectory, self.config.grid)


def build_generator(cfg: ExperimentConfig) -> GeneratorMatrix:
    model = MODELS[cfg.model](**cfg.model_params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MeshBoundWarning)
        return assemble(eval_coefficients(model, cfg.grid), cfg.scheme, cfg.boundary)


def initial_distribution(cfg: ExperimentConfig, dim: int | None = None) -> ProbVector:
    grid = cfg.grid
    n = grid.total_points
    dim = dim or n
    ic = cfg.initial
    if ic.kind == "file":
        path = Path(ic.path)
        if not path.is_absolute():
            path = Path(cfg.base_dir) / path
        try:
            v = np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None).ravel()
        except OSError as exc:
            raise ValidationError(f"initial.path: cannot read {path}: {exc}") from None
        if v.size not in (n, dim):
            raise ValidationError(f"initial.path: vector has {v.size} entries, expected {dim}")
    elif ic.kind == "delta":
        v = np.zeros(n)
        v[grid.nearest_index(ic.center)] = 1.0
    else:
        x = grid.points
        v = np.exp(-((x - np.asarray(ic.center)) ** 2).sum(axis=1) / (2 * ic.width**2))
    if v.size < dim:
        v = np.concatenate([v, np.zeros(dim - v.size)])
    if np.any(v < 0):
        raise ValidationError("initial distribution has negative entries")
    return ProbVector.from_array(v)


def snapshot_times(cfg: ExperimentConfig) -> np.ndarray:
    s = cfg.solver
    steps = [m for m in range(1, s.n_steps + 1) if m % s.record_every == 0 or m == s.n_steps]
    return np.array([0.0] + [m * s.dt for m in steps])


def solve(cfg: ExperimentConfig, R: GeneratorMatrix | None = None, p0=None, propagator=None) -> RunResult:
    """Run the configured solver; no files are written."""
    R = R if R is not None else build_generator(cfg)
    p0 = p0 if p0 is not None else initial_distribution(cfg, R.dim)
    s = cfg.solver
    notes = list(R.warnings)
    if s.name == "classical_expm":
        traj = expm_propagate(R, p0.values, snapshot_times(cfg))
        traj.metadata.update(dt=s.dt, n_steps=s.n_steps)
    elif s.name == "classical_euler":
        traj = euler_propagate(R, p0.values, s.dt, s.n_steps, s.record_every)
    elif s.name == "q_block":
        out = run_block_euler(R, p0, s.dt, s.n_steps, subnormalize=s.subnormalize, record_every=s.record_every)
        traj = out.trajectory
    elif s.name == "q_lcu":
        traj = run_lcu(R, p0, s.dt, s.n_steps, record_every=s.record_every).trajectory
    elif s.name == "q_schrod":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", AliasingWarning)
            traj = run_schrod(
                R, p0, s.dt, s.n_steps, s.eta_max, s.d_eta, s.offset, s.mode, s.record_every, propagator
            )
        if caught:
            worst = min(row["min_entry"] for row in traj.log)
            notes.append(f"aliasing: {len(caught)} snapshots with negative mass (min entry {worst:.3e})")
    elif s.name == "sde_mc":
        if R.bc.tag != "reflecting":
            raise ValidationError("solver.name: sde_mc supports reflecting boundaries only")
        n_sub = int(round(s.dt / s.sde_dt))
        model = MODELS[cfg.model](**cfg.model_params)
        traj = sde_trajectory(
            model, cfg.grid, p0.values, s.sde_dt, s.n_steps * n_sub, s.n_samples, s.seed, s.record_every * n_sub
        )
        traj.metadata.update(dt=s.dt, n_steps=s.n_steps, sde_dt=s.sde_dt)
    elif s.name == "analytic_steady":
        if cfg.model != "double_well_1d" or R.dim != cfg.grid.total_points:
            raise ValidationError("solver.name: analytic_steady exists for double_well_1d without auxiliary site")
        ps = steady_state_1d(cfg.model_params["kappa"], cfg.model_params["D"], cfg.grid)
        times = snapshot_times(cfg)
        traj = Trajectory(times, np.tile(ps.values, (times.size, 1)), {"solver": "analytic_steady"})
    else:  # pragma: no cover - guarded by config validation
        raise ValidationError(f"unknown solver {s.name}")
    traj.metadata["config"] = cfg.name
    return RunResult(cfg, R, traj, notes)


def _write_log(traj: Trajectory, path) -> None:
    rows = traj.log
    if not rows:
        drift = traj.l1_drift if traj.l1_drift is not None else np.zeros(len(traj))
        rows = [{"step": i, "time": float(t), "l1_drift": float(d)} for i, (t, d) in enumerate(zip(traj.times, drift))]
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([repr(r[k]) if isinstance(r.get(k), float) else r.get(k, "") for k in keys])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def run(cfg: ExperimentConfig, out_dir=None, **solve_kw) -> RunResult:
    """Solve and write ``<prefix>_trajectory.csv``, ``_moments.csv``, ``_log.csv`` and ``_summary.json``."""
    res = solve(cfg, **solve_kw)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        pre = cfg.output_prefix
        res.trajectory.to_csv(out / f"{pre}_trajectory.csv")
        write_moments_csv(res.moments, out / f"{pre}_moments.csv", cfg.grid.ndim)
        _write_log(res.trajectory, out / f"{pre}_log.csv")
        meta = {k: v for k, v in res.trajectory.metadata.items()}
        summary = {"config": cfg.to_dict(), "metadata": meta, "warnings": res.warnings}
        (out / f"{pre}_summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return res


# --- comparison ------------------------------------------------------------


@dataclass
class ComparisonReport:
    """Per-snapshot distances between two trajectories on the same grid."""

    labels: tuple
    times: np.ndarray
    l1: np.ndarray
    mean_gap: np.ndarray
    var_gap: np.ndarray
    solver_stats: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def final_l1(self) -> float:
        return float(self.l1[-1])

    @property
    def max_l1(self) -> float:
        return float(self.l1.max())

    def to_csv(self, path) -> None:
        d = self.var_gap.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "l1", "mean_gap"] + [f"var_gap_{i}" for i in range(d)])
            for t, a, b, v in zip(self.times, self.l1, self.mean_gap, self.var_gap):
                w.writerow([repr(float(t)), repr(float(a)), repr(float(b))] + [repr(float(x)) for x in v])

    def summary(self) -> str:
        a, b = self.labels
        lines = [
            f"compare {a} vs {b} over {self.times.size} snapshots",
            f"  max L1 distance     {self.max_l1:.6e}",
            f"  final L1 distance   {self.final_l1:.6e}",
            f"  max mean gap        {float(self.mean_gap.max()):.6e}",
            f"  max variance gap    {float(self.var_gap.max()):.6e}",
        ]
        for label, stats in self.solver_stats.items():
            for k, v in stats.items():
                lines.append(f"  {label}.{k:<18} {v:.6e}")
        for wmsg in self.warnings:
            lines.append(f"  warning: {wmsg}")
        return "\n".join(lines)


def _stats(traj: Trajectory) -> dict:
    out = {}
    if traj.log and "cumulative_success" in traj.log[-1]:
        out["cumulative_success"] = float(traj.log[-1]["cumulative_success"])
    if "expected_calls" in traj.metadata:
        out["expected_calls"] = float(traj.metadata["expected_calls"])
    return out


def compare_trajectories(ta: Trajectory, tb: Trajectory, grid, labels=("a", "b"), notes=()) -> ComparisonReport:
    if ta.times.shape != tb.times.shape or not np.allclose(ta.times, tb.times, rtol=0, atol=1e-12):
        raise ValidationError("trajectories have different time stamps")
    if ta.states.shape != tb.states.shape:
        raise ValidationError("trajectories live on different grids")
    l1 = np.abs(ta.states - tb.states).sum(axis=1)
    mgap = np.array([np.linalg.norm(mean(a, grid) - mean(b, grid)) for a, b in zip(ta.states, tb.states)])
    vgap = np.array([np.abs(variance(a, grid) - variance(b, grid)) for a, b in zip(ta.states, tb.states)])
    stats = {lab: st for lab, st in ((labels[0], _stats(ta)), (labels[1], _stats(tb))) if st}
    return ComparisonReport(tuple(labels), ta.times.copy(), l1, mgap, vgap, stats, list(notes))


def compare(cfg_a: ExperimentConfig, cfg_b: ExperimentConfig, out_dir=None) -> ComparisonReport:
    if cfg_a.axes != cfg_b.axes:
        raise ValidationError("configs use different grids")
    ra, rb = solve(cfg_a), solve(cfg_b)
    labels = (cfg_a.output_prefix, cfg_b.output_prefix)
    if labels[0] == labels[1]:
        labels = (labels[0] + "_a", labels[1] + "_b")
    rep = compare_trajectories(ra.trajectory, rb.trajectory, cfg_a.grid, labels, ra.warnings + rb.warnings)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rep.to_csv(out / f"compare_{labels[0]}_{labels[1]}.csv")
        (out / f"compare_{labels[0]}_{labels[1]}.txt").write_text(rep.summary() + "\n")
    return rep


# --- sweeps ----------------------------------------------------------------


@dataclass
class SweepResult:
    rows: list
    moment_rows: list
    columns: list

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([_fmt(r.get(c, "")) for c in self.columns])

    def moments_to_csv(self, path, ndim: int) -> None:
        labels = "xyzw"[:ndim]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell", "run", "time"] + [f"mean_{a}" for a in labels] + [f"var_{a}" for a in labels])
            for r in self.moment_rows:
                w.writerow([r[0], r[1]] + [_fmt(v) for v in r[2:]])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _cells(spec: dict) -> list:
    if "cells" in spec:
        cells = spec["cells"]
        if not isinstance(cells, list) or not cells:
            raise ValidationError("sweep.cells: expected a non-empty list")
        return [(c.get("label", str(i)), dict(c.get("overrides", {}))) for i, c in enumerate(cells)]
    params = spec.get("parameters")
    if not isinstance(params, dict) or not params:
        raise ValidationError("sweep: need 'cells' or a non-empty 'parameters' map")
    keys = list(params)
    combos = itertools.product(*(params[k] for k in keys))
    return [(str(i), dict(zip(keys, vals))) for i, vals in enumerate(combos)]


def _run_cell(base: dict, label: str, overrides: dict, runs: dict, comparisons: dict, base_dir="."):
    row = {"cell": label, **{k: v for k, v in overrides.items()}}
    mrows = []
    try:
        cell = apply_overrides(base, overrides)
        results, gens = {}, {}
        for name, run_over in runs.items():
            cfg = config_from_dict(apply_overrides(cell, run_over), base_dir)
            d = cfg.to_dict()
            key = json.dumps([d["model"], d["grid"], d["scheme"], d["boundary"]], sort_keys=True)
            if key not in gens:
                gens[key] = build_generator(cfg)
            results[name] = solve(cfg, R=gens[key])
            for rec in results[name].moments:
                mrows.append([label, name, rec.time, *rec.mean, *rec.variance])
        for clabel, (a, b) in comparisons.items():
            rep = compare_trajectories(results[a].trajectory, results[b].trajectory, results[a].config.grid)
            row[f"{clabel}_final_l1"] = rep.final_l1
            row[f"{clabel}_max_mean_gap"] = float(rep.mean_gap.max())
            row[f"{clabel}_max_var_gap"] = float(rep.var_gap.max())
        row["status"] = "ok"
    except (ValidationError, NumericalError) as exc:
        logger.warning("sweep cell %s failed: %s", label, exc)
        row["status"] = f"error: {exc}"
    return row, mrows


def sweep(spec: dict, out_dir=None, workers: int = 1, base_dir=".") -> SweepResult:
    """Run every cell of a sweep; failed cells are reported, not raised.

    ``spec`` keys: ``base`` (config object) or ``base_preset`` (name);
    ``cells`` (list of ``{"label", "overrides"}``) or ``parameters``
    (dotted path -> list, cartesian product); ``runs`` (name -> overrides,
    e.g. a replacement ``solver`` block); ``comparisons`` (label -> [run, run]).
    """
    if "base" in spec:
        base = spec["base"]
    elif "base_preset" in spec:
        base = load_preset_dict(spec["base_preset"])
    else:
        raise ValidationError("sweep: need 'base' or 'base_preset'")
    runs = spec.get("runs") or {"run": {}}
    comparisons = spec.get("comparisons", {})
    for clabel, pair in comparisons.items():
        if len(pair) != 2 or any(p not in runs for p in pair):
            raise ValidationError(f"sweep.comparisons.{clabel}: must name two entries of 'runs'")
    cells = _cells(spec)
    # validate every cell/run configuration up front
    for label, over in cells:
        for run_over in runs.values():
            config_from_dict(apply_overrides(apply_overrides(base, over), run_over), base_dir)
    args = [(base, label, over, runs, comparisons, str(base_dir)) for label, over in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_run_cell, *zip(*args)))
    else:
        outs = [_run_cell(*a) for a in args]
    rows = [o[0] for o in outs]
    mrows = [m for o in outs for m in o[1]]
    param_cols = list(dict.fromkeys(k for _, over in cells for k in over))
    metric_cols = [f"{c}_{m}" for c in comparisons for m in ("final_l1", "max_mean_gap", "max_var_gap")]
    result = SweepResult(rows, mrows, ["cell"] + param_cols + metric_cols + ["status"])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        name = spec.get("name", "sweep")
        result.to_csv(out / f"{name}_table.csv")
        ndim = len(base["grid"])
        result.moments_to_csv(out / f"{name}_moments.csv", ndim)
    return result
