"""Spatial grids, drift/diffusion models and Fokker-Planck coefficients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._exceptions import NumericalError, ValidationError

__all__ = [
    "Axis",
    "Grid",
    "DriftDiffusionModel",
    "CoefficientField",
    "build_grid",
    "eval_coefficients",
    "mesh_bound",
    "double_well_1d",
    "spiral_2d",
    "MODELS",
]


@dataclass(frozen=True)
class Axis:
    """Uniform discretisation of one state variable on ``[x_min, x_max]``."""

    name: str
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise ValidationError(f"axis {self.name!r}: n_points must be an integer >= 3, got {self.n_points}")
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)) or self.x_min >= self.x_max:
            raise ValidationError(f"axis {self.name!r}: need finite x_min < x_max, got [{self.x_min}, {self.x_max}]")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return self.x_min + self.spacing * np.arange(self.n_points)

    @classmethod
    def from_spacing(cls, name, x_min, x_max, spacing):
        n = (x_max - x_min) / spacing
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValidationError(f"axis {name!r}: spacing {spacing} does not divide [{x_min}, {x_max}]")
        return cls(name, float(x_min), float(x_max), int(round(n)) + 1)


@dataclass(frozen=True)
class Grid:
    """Tensor-product grid. Flat indices are row-major with the first axis slowest."""

    axes: tuple

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if not self.axes:
            raise ValidationError("grid needs at least one axis")

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.n_points for a in self.axes)

    @property
    def total_points(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacings(self) -> np.ndarray:
        return np.array([a.spacing for a in self.axes])

    @property
    def points(self) -> np.ndarray:
        """Coordinates of every grid point, shape ``(total_points, ndim)``."""
        mesh = np.meshgrid(*(a.points for a in self.axes), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def flat_index(self, multi_index) -> int | np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(multi_index).T), self.shape)

    def multi_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(flat, self.shape), axis=-1)

    def coordinate(self, flat) -> np.ndarray:
        mi = self.multi_index(flat)
        lo = np.array([a.x_min for a in self.axes])
        return lo + mi * self.spacings

    def nearest_index(self, point) -> int:
        """Flat index of the grid point closest to ``point`` (clipped to the domain)."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.shape != (self.ndim,):
            raise ValidationError(f"point must have {self.ndim} coordinates, got shape {point.shape}")
        mi = [
            int(np.clip(np.rint((p - a.x_min) / a.spacing), 0, a.n_points - 1))
            for p, a in zip(point, self.axes)
        ]
        return int(self.flat_index(mi))

    def contains(self, point) -> bool:
        point = np.atleast_1d(point)
        return all(a.x_min <= p <= a.x_max for p, a in zip(point, self.axes))


def build_grid(axes: Sequence[Axis]) -> Grid:
    return Grid(tuple(axes))


@dataclass(frozen=True)
class DriftDiffusionModel:
    """Stochastic dynamics ``dx = f(x) dt + g(x) dGamma`` with diagonal gains.

    ``drift`` and ``noise_gains`` map an array of states ``(n, d)`` to ``(n, d)``.
    The Langevin forcing is normalised as ``<Gamma Gamma'> = 2 delta``, so the
    diffusion coefficient is ``g**2``.
    """

    drift: Callable[[np.ndarray], np.ndarray]
    noise_gains: Callable[[np.ndarray], np.ndarray]
    ndim: int
    name: str = "custom"
    params: dict = field(default_factory=dict)
    constant_noise: bool = False

    def fp_drift(self, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
        """Fokker-Planck drift at arbitrary (off-grid) states."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.array(self.drift(x), dtype=float)
        if self.constant_noise:
            return out
        g = np.asarray(self.noise_gains(x), dtype=float)
        for i in range(self.ndim):
            e = np.zeros(self.ndim)
            e[i] = h
            dg = (np.asarray(self.noise_gains(x + e))[:, i] - np.asarray(self.noise_gains(x - e))[:, i]) / (2 * h)
            out[:, i] += g[:, i] * dg
        return out


def double_well_1d(kappa: float, D: float) -> DriftDiffusionModel:
    """``f(x) = x - kappa x^3`` with constant diffusion ``D``."""
    if kappa <= 0 or D <= 0:
        raise ValidationError(f"double_well_1d needs kappa > 0 and D > 0, got kappa={kappa}, D={D}")
    gain = np.sqrt(D)

    def drift(x):
        return x - kappa * x * x * x  # x**3 dispatches to pow, which is far slower

    def gains(x):
        return np.full_like(x, gain, dtype=float)

    return DriftDiffusionModel(drift, gains, 1, "double_well_1d", {"kappa": kappa, "D": D}, True)


def spiral_2d(gamma: float, D: float) -> DriftDiffusionModel:
    """``f(x, y) = (x - gamma x y^2, -y - gamma x^2 y)`` with constant diffusion ``D``."""
    if gamma <= 0 or D <= 0:
        raise ValidationError(f"spiral_2d needs gamma > 0 and D > 0, got gamma={gamma}, D={D}")
    gain = np.sqrt(D)

    def drift(xy):
        x, y = xy[:, 0], xy[:, 1]
        return np.stack([x - gamma * x * y * y, -y - gamma * x * x * y], axis=1)

    def gains(xy):
        return np.full_like(xy, gain, dtype=float)

    return DriftDiffusionModel(drift, gains, 2, "spiral_2d", {"gamma": gamma, "D": D}, True)


MODELS = {"double_well_1d": double_well_1d, "spiral_2d": spiral_2d}


@dataclass(frozen=True)
class CoefficientField:
    """Drift ``D^(i)`` and diagonal diffusion ``D^(ii)`` on every grid point.

    Both arrays have shape ``(total_points, ndim)``; column ``i`` belongs to axis ``i``.
    """

    grid: Grid
    drift: np.ndarray
    diffusion: np.ndarray

    def __post_init__(self):
        shape = (self.grid.total_points, self.grid.ndim)
        if self.drift.shape != shape or self.diffusion.shape != shape:
            raise ValidationError(
                f"coefficient arrays must have shape {shape}, got {self.drift.shape} and {self.diffusion.shape}"
            )

    def line(self, axis: int, multi_index_rest) -> tuple:
        """Drift/diffusion along ``axis`` with the other indices fixed."""
        drift = self.drift[:, axis].reshape(self.grid.shape)
        diff = self.diffusion[:, axis].reshape(self.grid.shape)
        idx = list(multi_index_rest)
        idx.insert(axis, slice(None))
        return drift[tuple(idx)], diff[tuple(idx)]


def eval_coefficients(model: DriftDiffusionModel, grid: Grid) -> CoefficientField:
    if model.ndim != grid.ndim:
        raise ValidationError(f"model is {model.ndim}-dimensional but grid has {grid.ndim} axes")
    pts = grid.points
    f = np.asarray(model.drift(pts), dtype=float).reshape(pts.shape)
    g = np.asarray(model.noise_gains(pts), dtype=float).reshape(pts.shape)
    drift = f.copy()
    for i, axis in enumerate(grid.axes):
        gi = g[:, i].reshape(grid.shape)
        # one-sided differences at the boundary (edge_order=1)
        dgi = np.gradient(gi, axis.spacing, axis=i)
        drift[:, i] += (gi * dgi).ravel()
    diffusion = g**2
    for name, arr in (("drift", drift), ("diffusion", diffusion)):
        bad = ~np.isfinite(arr)
        if bad.any():
            k = int(np.argwhere(bad)[0, 0])
            raise NumericalError(f"non-finite {name} at grid point {k} (x={pts[k]})")
    return CoefficientField(grid, drift, diffusion)


def mesh_bound(field: CoefficientField) -> np.ndarray:
    """Largest spacing per axis keeping finite-difference off-diagonals non-negative.

    Evaluated on points interior along each axis; ``inf`` where the drift vanishes.
    """
    grid = field.grid
    bounds = np.full(grid.ndim, np.inf)
    for i in range(grid.ndim):
        drift = field.drift[:, i].reshape(grid.shape)
        diff = field.diffusion[:, i].reshape(grid.shape)
        inner = [slice(None)] * grid.ndim
        inner[i] = slice(1, -1)
        f = np.abs(drift[tuple(inner)])
        d = diff[tuple(inner)]
        nz = f > 0
        if nz.any():
            bounds[i] = float(np.min(2.0 * d[nz] / f[nz]))
    return bounds
