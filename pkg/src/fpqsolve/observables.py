"""Moments and distances of discretised distributions."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._exceptions import NumericalError, ValidationError
from .grid import Grid

__all__ = ["MomentRecord", "mean", "variance", "trace_distance", "moments", "write_moments_csv"]

VAR_NEG_TOL = 1e-12


def _grid_part(p, grid: Grid) -> np.ndarray:
    """Values on the grid sites; a trailing auxiliary site is dropped."""
    v = np.asarray(getattr(p, "values", p), dtype=float).ravel()
    n = grid.total_points
    if v.size == n + 1:
        return v[:n]
    if v.size != n:
        raise ValidationError(f"distribution has {v.size} entries, grid has {n} points")
    return v


def mean(p, grid: Grid) -> np.ndarray:
    """``<x_i> = sum_k x_i(k) p_k`` per axis (auxiliary site excluded)."""
    return _grid_part(p, grid) @ grid.points


def variance(p, grid: Grid) -> np.ndarray:
    v = _grid_part(p, grid)
    x = grid.points
    mu = v @ x
    var = v @ (x - mu) ** 2
    if var.min() < -VAR_NEG_TOL:
        raise NumericalError(f"negative variance {var.min():.3e}; input is not a distribution")
    return np.clip(var, 0.0, None)


def trace_distance(pa, pb) -> float:
    """``sum_i |pa_i - pb_i|``.

    Inputs must have equal length; an auxiliary site therefore enters only
    when both vectors carry it.
    """
    a = np.asarray(getattr(pa, "values", pa), dtype=float).ravel()
    b = np.asarray(getattr(pb, "values", pb), dtype=float).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.abs(a - b).sum())


@dataclass(frozen=True)
class MomentRecord:
    time: float
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        if np.min(self.variance) < -VAR_NEG_TOL:
            raise ValidationError("variance must be non-negative")


def moments(trajectory, grid: Grid) -> list:
    """One :class:`MomentRecord` per snapshot of a trajectory."""
    return [MomentRecord(float(t), mean(s, grid), variance(s, grid)) for t, s in zip(trajectory.times, trajectory.states)]


_AXIS_LABELS = "xyzw"


def write_moments_csv(records, path, ndim: int) -> None:
    labels = [_AXIS_LABELS[i] if i < len(_AXIS_LABELS) else str(i) for i in range(ndim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"mean_{a}" for a in labels] + [f"var_{a}" for a in labels])
        for r in records:
            w.writerow([repr(r.time)] + [repr(float(v)) for v in r.mean] + [repr(float(v)) for v in r.variance])
