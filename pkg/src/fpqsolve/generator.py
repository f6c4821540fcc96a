"""Master-equation generators for the discretised Fokker-Planck operator.

The generator ``R`` acts on column vectors ``p`` of site probabilities,
``dp/dt = R p``. Entry ``R[j, k]`` (``j != k``) is the rate of flow from site
``k`` to site ``j``; diagonal entries are fixed by requiring each column to
sum to zero, so total probability is conserved exactly.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid

from ._exceptions import MeshBoundWarning, NumericalError, ValidationError
from .grid import Axis, CoefficientField, Grid

logger = logging.getLogger(__name__)

__all__ = [
    "BoundaryCondition",
    "GeneratorMatrix",
    "ProbVector",
    "ValidationReport",
    "assemble",
    "assemble_1d_rates",
    "assemble_1d_finite_difference",
    "assemble_multidim",
    "rates_line",
    "finite_difference_line",
    "taylor_rates_line",
    "validate_generator",
    "spectral_abscissa",
    "SCHEMES",
]

BC_TAGS = ("reflecting", "periodic", "absorbing_sink", "source")
SCHEMES = ("rates", "finite_difference")
DENSE_EIG_LIMIT = 2048


@dataclass(frozen=True)
class BoundaryCondition:
    tag: str = "reflecting"
    rate: float = 0.0

    def __post_init__(self):
        if self.tag not in BC_TAGS:
            raise ValidationError(f"unknown boundary condition {self.tag!r}; expected one of {BC_TAGS}")
        if self.rate < 0 or not np.isfinite(self.rate):
            raise ValidationError(f"boundary flow rate must be finite and >= 0, got {self.rate}")

    @property
    def auxiliary(self) -> bool:
        return self.tag in ("absorbing_sink", "source")

    @property
    def conserving(self) -> bool:
        return self.tag in ("reflecting", "periodic")


@dataclass(frozen=True)
class ProbVector:
    """Non-negative vector with unit L1 norm.

    Entries down to ``-1e-14`` are treated as roundoff and clamped to zero.
    Use :meth:`from_array` to normalise (and optionally clip) arbitrary input.
    """

    values: np.ndarray

    NEG_TOL = 1e-14
    NORM_TOL = 1e-12

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValidationError("probability vector has non-finite entries")
        if v.min(initial=0.0) < -self.NEG_TOL:
            raise ValidationError(f"probability vector has negative entry {v.min():.3e}")
        v[v < 0] = 0.0
        total = v.sum()
        if abs(total - 1.0) > self.NORM_TOL:
            raise ValidationError(f"probability vector L1 norm is {total!r}, expected 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_array(cls, values, clip: bool = False) -> "ProbVector":
        v = np.array(values, dtype=float).ravel()
        if clip:
            v = np.clip(v, 0.0, None)
        total = v.sum()
        if not total > 0:
            raise ValidationError("cannot normalise a vector with non-positive total mass")
        return cls(v / total)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class GeneratorMatrix:
    """Sparse generator together with its provenance."""

    matrix: sp.csr_array
    scheme: str
    bc: BoundaryCondition
    grid: Grid
    warnings: tuple = field(default_factory=tuple)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_grid(self) -> int:
        return self.grid.total_points

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def to_csv(self, path) -> None:
        """Write the non-zero entries as ``row,col,value`` triplets."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "value"])
            for k in order:
                w.writerow([int(coo.row[k]), int(coo.col[k]), repr(float(coo.data[k]))])

    @classmethod
    def from_dense(cls, R, grid: Grid | None = None, scheme="custom", bc=None) -> "GeneratorMatrix":
        R = np.asarray(R, dtype=float)
        if grid is None:
            grid = Grid((Axis("index", 0.0, float(max(R.shape[0] - 1, 2)), max(R.shape[0], 3)),))
        return cls(sp.csr_array(R), scheme, bc or BoundaryCondition(), grid)


def _as_dense(R) -> np.ndarray:
    if isinstance(R, GeneratorMatrix):
        return R.dense()
    if sp.issparse(R):
        return R.toarray()
    return np.asarray(R)


# --- 1D line builders ------------------------------------------------------
# Each returns the (dense, n x n) off-diagonal part of a 1D generator plus the
# diagonal that zeroes every column sum.


def _check_diffusion(diffusion):
    bad = np.flatnonzero(~(diffusion > 0))
    if bad.size:
        raise ValidationError(f"diffusion must be > 0 everywhere; site {bad[0]} has {diffusion[bad[0]]}")


def _with_diagonal(off: np.ndarray) -> np.ndarray:
    np.fill_diagonal(off, 0.0)
    off[np.diag_indices_from(off)] = -off.sum(axis=0)
    return off


def rates_line(drift, diffusion, dx, periodic=False) -> np.ndarray:
    """Thermodynamically consistent hopping rates from a pseudo-potential.

    ``V = -cumtrapz(drift / diffusion)`` anchored at the first site;
    ``r_{k,k+-1} = diffusion_k / dx^2 * exp(-(V_{k+-1} - V_k) / 2)``.
    """
    drift = np.asarray(drift, dtype=float)
    diffusion = np.asarray(diffusion, dtype=float)
    _check_diffusion(diffusion)
    n = drift.size
    V = -cumulative_trapezoid(drift / diffusion, dx=dx, initial=0.0)
    up = -(V[1:] - V[:-1]) / 2.0  # exponent for k -> k+1
    down = -(V[:-1] - V[1:]) / 2.0  # exponent for k+1 -> k
    expo = [up, down]
    if periodic:
        dv_wrap = -dx * (drift[-1] / diffusion[-1] + drift[0] / diffusion[0]) / 2.0  # V_0' - V_{n-1}
        expo.append(np.array([-dv_wrap / 2.0, dv_wrap / 2.0]))
    for e in expo:
        big = np.flatnonzero(e > 700.0)
        if big.size:
            raise NumericalError(f"rate exponent overflows at site {int(big[0])} (exponent {e[big[0]]:.1f})")
    scale = diffusion / dx**2
    R = np.zeros((n, n))
    k = np.arange(n - 1)
    R[k + 1, k] = scale[:-1] * np.exp(up)
    R[k, k + 1] = scale[1:] * np.exp(down)
    if periodic:
        R[0, n - 1] = scale[-1] * np.exp(-dv_wrap / 2.0)
        R[n - 1, 0] = scale[0] * np.exp(dv_wrap / 2.0)
    return _with_diagonal(R)


def taylor_rates_line(drift, diffusion, dx, periodic=False) -> np.ndarray:
    """:func:`rates_line` with ``exp`` truncated at first order."""
    drift = np.asarray(drift, dtype=float)
    diffusion = np.asarray(diffusion, dtype=float)
    _check_diffusion(diffusion)
    n = drift.size
    V = -cumulative_trapezoid(drift / diffusion, dx=dx, initial=0.0)
    scale = diffusion / dx**2
    R = np.zeros((n, n))
    k = np.arange(n - 1)
    R[k + 1, k] = scale[:-1] * (1.0 - (V[1:] - V[:-1]) / 2.0)
    R[k, k + 1] = scale[1:] * (1.0 - (V[:-1] - V[1:]) / 2.0)
    if periodic:
        dv_wrap = -dx * (drift[-1] / diffusion[-1] + drift[0] / diffusion[0]) / 2.0
        R[0, n - 1] = scale[-1] * (1.0 - dv_wrap / 2.0)
        R[n - 1, 0] = scale[0] * (1.0 + dv_wrap / 2.0)
    return _with_diagonal(R)


def finite_difference_line(drift, diffusion, dx, periodic=False) -> np.ndarray:
    """Central-difference generator; boundary columns keep only their inward flow."""
    drift = np.asarray(drift, dtype=float)
    diffusion = np.asarray(diffusion, dtype=float)
    _check_diffusion(diffusion)
    n = drift.size
    fwd = (0.5 * drift + diffusion / dx) / dx  # site k -> k+1
    bwd = (-0.5 * drift + diffusion / dx) / dx  # site k -> k-1
    R = np.zeros((n, n))
    k = np.arange(n - 1)
    R[k + 1, k] = fwd[:-1]
    R[k, k + 1] = bwd[1:]
    if periodic:
        R[0, n - 1] = fwd[-1]
        R[n - 1, 0] = bwd[0]
    return _with_diagonal(R)


_LINE_BUILDERS = {"rates": rates_line, "finite_difference": finite_difference_line}


# --- assembly --------------------------------------------------------------


def _line_indices(grid: Grid, axis: int, rest) -> np.ndarray:
    idx = list(rest)
    idx.insert(axis, np.arange(grid.shape[axis]))
    return np.ravel_multi_index(tuple(np.broadcast_arrays(*idx)), grid.shape)


def _other_indices(grid: Grid, axis: int):
    others = [n for i, n in enumerate(grid.shape) if i != axis]
    return np.ndindex(*others) if others else [()]


def assemble_multidim(per_axis: Sequence[Callable], grid: Grid) -> sp.csr_array:
    """Sum of 1D line generators embedded along each axis.

    ``per_axis[a](rest)`` returns the dense 1D generator along axis ``a`` for the
    line whose other multi-index components are ``rest``. In two dimensions
    this is ``sum_j R_x(y_j) (x) E_jj + sum_i E_ii (x) R_y(x_i)``. The diagonal
    of the result is recomputed from the off-diagonal column sums.
    """
    if len(per_axis) != grid.ndim:
        raise ValidationError(f"got {len(per_axis)} per-axis builders for a {grid.ndim}-dimensional grid")
    rows, cols, vals = [], [], []
    for a, builder in enumerate(per_axis):
        for rest in _other_indices(grid, a):
            line = np.asarray(builder(rest))
            glob = _line_indices(grid, a, rest)
            r, c = np.nonzero(line)
            off = r != c
            rows.append(glob[r[off]])
            cols.append(glob[c[off]])
            vals.append(line[r[off], c[off]])
    n = grid.total_points
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    off = sp.coo_array((vals, (rows, cols)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    return _conserving_diagonal(off)


def _conserving_diagonal(off: sp.csr_array) -> sp.csr_array:
    off = off.tolil()
    off.setdiag(0.0)
    off = off.tocsr()
    colsum = np.asarray(off.sum(axis=0)).ravel()
    return (off + sp.diags_array(-colsum)).tocsr()


def _boundary_sites(grid: Grid) -> np.ndarray:
    mi = grid.multi_index(np.arange(grid.total_points))
    on_face = np.zeros(grid.total_points, dtype=bool)
    for a, n in enumerate(grid.shape):
        on_face |= (mi[:, a] == 0) | (mi[:, a] == n - 1)
    return np.flatnonzero(on_face)


def _attach_auxiliary(R: sp.csr_array, grid: Grid, bc: BoundaryCondition) -> sp.csr_array:
    n = R.shape[0]
    sites = _boundary_sites(grid)
    R = sp.block_array([[R, None], [None, sp.csr_array((1, 1))]], format="lil")
    for s in sites:
        if bc.tag == "absorbing_sink":
            R[n, s] = bc.rate
        else:
            R[s, n] = bc.rate
    return _conserving_diagonal(R.tocsr())


def assemble(
    field: CoefficientField,
    scheme: str = "finite_difference",
    bc: BoundaryCondition | None = None,
) -> GeneratorMatrix:
    """Generator for a coefficient field on a grid of any dimension."""
    bc = bc or BoundaryCondition()
    if scheme not in _LINE_BUILDERS:
        raise ValidationError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    line = _LINE_BUILDERS[scheme]
    grid = field.grid
    periodic = bc.tag == "periodic"

    def builder(a):
        dx = grid.axes[a].spacing
        return lambda rest: line(*field.line(a, rest), dx, periodic=periodic)

    R = assemble_multidim([builder(a) for a in range(grid.ndim)], grid)
    notes = []
    if scheme == "finite_difference":
        off = R.tocoo()
        neg = (off.row != off.col) & (off.data < 0)
        if neg.any():
            msg = (
                f"{int(neg.sum())} negative off-diagonal entries (min {off.data[neg].min():.3e}); "
                "grid spacing exceeds the drift/diffusion mesh bound"
            )
            warnings.warn(msg, MeshBoundWarning, stacklevel=2)
            logger.warning(msg)
            notes.append(msg)
    if bc.auxiliary:
        R = _attach_auxiliary(R, grid, bc)
    return GeneratorMatrix(R, scheme, bc, grid, tuple(notes))


def _require_1d(field, axis):
    if field.grid.ndim != 1:
        raise ValidationError("1D assembly needs a one-dimensional coefficient field")
    if axis is not None and axis != field.grid.axes[0]:
        raise ValidationError("axis does not match the field's grid")


def assemble_1d_rates(field: CoefficientField, axis: Axis | None = None, bc=None) -> GeneratorMatrix:
    _require_1d(field, axis)
    return assemble(field, "rates", bc)


def assemble_1d_finite_difference(field: CoefficientField, axis: Axis | None = None, bc=None) -> GeneratorMatrix:
    _require_1d(field, axis)
    return assemble(field, "finite_difference", bc)


# --- validation ------------------------------------------------------------


def spectral_abscissa(R) -> float:
    """Largest real part of the spectrum (dense for small, Arnoldi otherwise)."""
    M = R.matrix if isinstance(R, GeneratorMatrix) else R
    n = M.shape[0]
    if n <= DENSE_EIG_LIMIT:
        return float(np.linalg.eigvals(_as_dense(M)).real.max())
    from scipy.sparse.linalg import eigs

    vals = eigs(sp.csr_array(M), k=1, which="LR", return_eigenvectors=False)
    return float(vals.real.max())


@dataclass(frozen=True)
class ValidationReport:
    max_abs_column_sum: float
    max_abs_entry: float
    min_offdiagonal: float
    max_column_sparsity: int
    spectral_abscissa: float
    conserving: bool
    warnings: tuple = ()

    @property
    def conserves_probability(self) -> bool:
        return self.max_abs_column_sum <= 1e-12 * max(self.max_abs_entry, 1.0)

    @property
    def nonnegative_rates(self) -> bool:
        return self.min_offdiagonal >= 0.0

    def as_dict(self) -> dict:
        return {
            "max_abs_column_sum": self.max_abs_column_sum,
            "max_abs_entry": self.max_abs_entry,
            "min_offdiagonal": self.min_offdiagonal,
            "max_column_sparsity": self.max_column_sparsity,
            "spectral_abscissa": self.spectral_abscissa,
            "conserving": self.conserving,
            "conserves_probability": self.conserves_probability,
            "nonnegative_rates": self.nonnegative_rates,
        }


def validate_generator(R: GeneratorMatrix) -> ValidationReport:
    M = sp.csr_array(R.matrix, copy=True)
    M.eliminate_zeros()
    coo = M.tocoo()
    off = coo.row != coo.col
    colsum = np.asarray(M.sum(axis=0)).ravel()
    sparsity = np.diff(M.tocsc().indptr)
    notes = list(R.warnings)
    min_off = float(coo.data[off].min()) if off.any() else 0.0
    if min_off < 0:
        notes.append(f"negative off-diagonal entry {min_off:.3e}")
    return ValidationReport(
        max_abs_column_sum=float(np.abs(colsum).max()),
        max_abs_entry=float(np.abs(coo.data).max(initial=0.0)),
        min_offdiagonal=min_off,
        max_column_sparsity=int(sparsity.max(initial=0)),
        spectral_abscissa=spectral_abscissa(M),
        conserving=R.bc.conserving,
        warnings=tuple(notes),
    )
