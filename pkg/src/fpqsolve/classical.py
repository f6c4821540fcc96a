"""Classical reference solvers for the master equation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ._exceptions import NumericalError, ValidationError
from .generator import GeneratorMatrix, ProbVector
from .grid import DriftDiffusionModel, Grid

logger = logging.getLogger(__name__)

__all__ = [
    "Trajectory",
    "expm_propagate",
    "euler_propagate",
    "sde_monte_carlo",
    "sde_trajectory",
    "steady_state_1d",
    "DENSE_EXPM_LIMIT",
]

DENSE_EXPM_LIMIT = 4096
EULER_NEG_TOL = 1e-10
MC_CHUNK = 20000


@dataclass
class Trajectory:
    """Snapshots of a probability vector.

    ``states`` has shape ``(len(times), dim)``. ``log`` holds one dict per
    solver step (solver specific columns) and ``metadata`` the solver tag and
    parameters.
    """

    times: np.ndarray
    states: np.ndarray
    metadata: dict = field(default_factory=dict)
    l1_drift: np.ndarray | None = None
    log: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.states.shape[0] != self.times.size:
            raise ValidationError("one state per time stamp required")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("trajectory times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def final(self) -> ProbVector:
        return ProbVector(self.states[-1])

    def to_csv(self, path) -> None:
        dim = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + [f"p_{k}" for k in range(dim)])
            for t, row in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def _matrix(R):
    return R.matrix if isinstance(R, GeneratorMatrix) else sp.csr_array(np.asarray(R, dtype=float))


def _renormalize(p: np.ndarray) -> tuple[np.ndarray, float]:
    total = p.sum()
    return p / total, abs(total - 1.0)


def expm_propagate(R, p0, times) -> Trajectory:
    """Exact propagation ``p(t) = expm(R t) p0`` at each requested time.

    Uses scaling-and-squaring with a Pade approximant on the dense matrix and
    chains the propagators between consecutive time stamps.
    """
    M = _matrix(R)
    n = M.shape[0]
    if n > DENSE_EXPM_LIMIT:
        raise ValidationError(f"dense matrix exponential limited to dim <= {DENSE_EXPM_LIMIT}, got {n}")
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValidationError("times must be non-negative and strictly increasing")
    dense = M.toarray()
    p = np.asarray(p0, dtype=float).copy()
    cache: dict[float, np.ndarray] = {}
    states, drift = [], []
    t_prev = 0.0
    for t in times:
        dt = float(t - t_prev)
        if dt > 0:
            key = round(dt, 12)
            if key not in cache:
                cache[key] = scipy.linalg.expm(dense * dt)
            p = cache[key] @ p
        p, d = _renormalize(p)
        states.append(p.copy())
        drift.append(d)
        t_prev = t
    return Trajectory(times, np.array(states), {"solver": "classical_expm"}, np.array(drift))


def euler_propagate(R, p0, dt: float, n_steps: int, record_every: int = 1) -> Trajectory:
    """Explicit Euler ``p <- (I + dt R) p`` with per-step L1 renormalisation."""
    if not dt > 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    if n_steps < 0:
        raise ValidationError("n_steps must be >= 0")
    M = _matrix(R)
    A = sp.identity(M.shape[0], format="csr") + dt * M
    p = np.asarray(p0, dtype=float).copy()
    times, states, drift, log = [0.0], [p.copy()], [0.0], []
    for m in range(1, n_steps + 1):
        p = A @ p
        if p.min() < -EULER_NEG_TOL:
            k = int(np.argmin(p))
            raise NumericalError(
                f"Euler step {m} produced negative probability {p[k]:.3e} at site {k}; "
                "reduce dt or refine the grid"
            )
        p = np.clip(p, 0.0, None)
        p, d = _renormalize(p)
        log.append({"step": m, "l1_drift": d})
        if m % record_every == 0 or m == n_steps:
            times.append(m * dt)
            states.append(p.copy())
            drift.append(d)
    meta = {"solver": "classical_euler", "dt": dt, "n_steps": n_steps}
    return Trajectory(np.array(times), np.array(states), meta, np.array(drift), log)


def steady_state_1d(kappa: float, D: float, grid: Grid) -> ProbVector:
    """Discretised stationary density of the double-well model, ``exp((2x^2 - kappa x^4) / 4D)``."""
    if kappa <= 0 or D <= 0:
        raise ValidationError("kappa and D must be positive")
    if grid.ndim != 1:
        raise ValidationError("steady_state_1d needs a 1D grid")
    x = grid.axes[0].points
    logp = (2 * x**2 - kappa * x**4) / (4 * D)
    return ProbVector.from_array(np.exp(logp - logp.max()))


# --- Monte Carlo -----------------------------------------------------------


def _reflect(x, lo, hi):
    """Mirror ``x`` in place at ``hi`` then ``lo``."""
    np.subtract(hi, x, out=x)
    np.abs(x, out=x)
    np.subtract(hi, x, out=x)
    x -= lo
    np.abs(x, out=x)
    x += lo
    if np.any(x.max(axis=0) > hi):
        raise NumericalError("sample escaped the domain after reflection; dt is too large")
    return x


def _histogram(x, grid: Grid) -> np.ndarray:
    idx = []
    for i, a in enumerate(grid.axes):
        idx.append(np.clip(np.rint((x[:, i] - a.x_min) / a.spacing).astype(int), 0, a.n_points - 1))
    flat = np.ravel_multi_index(tuple(idx), grid.shape)
    return np.bincount(flat, minlength=grid.total_points).astype(float)


def _initial_samples(x0, grid: Grid, n, rng):
    x0 = np.asarray(x0.values if isinstance(x0, ProbVector) else x0, dtype=float)
    if x0.ndim == 1 and x0.size == grid.total_points and grid.total_points != grid.ndim:
        sites = rng.choice(grid.total_points, size=n, p=x0 / x0.sum())
        return grid.coordinate(sites).reshape(n, grid.ndim)
    x0 = np.atleast_1d(x0)
    if x0.shape != (grid.ndim,):
        raise ValidationError(f"x0 must be a state of length {grid.ndim} or a probability vector on the grid")
    return np.tile(x0, (n, 1))


def sde_trajectory(
    model: DriftDiffusionModel,
    grid: Grid,
    x0,
    dt: float,
    n_steps: int,
    n_samples: int,
    seed: int,
    record_every: int | None = None,
) -> Trajectory:
    """Euler-Maruyama ensemble histogrammed on ``grid``.

    Step: ``x += a(x) dt + g(x) sqrt(2 dt) xi`` with ``a`` the Fokker-Planck
    drift; paths are mirrored at the domain edges. Samples are split into
    fixed-size chunks, each with its own stream spawned from ``seed``, so the
    result depends only on ``(seed, n_samples)``.
    """
    if not dt > 0 or n_steps < 0 or n_samples < 1:
        raise ValidationError("need dt > 0, n_steps >= 0 and n_samples >= 1")
    record_every = record_every or max(n_steps, 1)
    lo = np.array([a.x_min for a in grid.axes])
    hi = np.array([a.x_max for a in grid.axes])
    n_chunks = -(-n_samples // MC_CHUNK)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    n_rec = n_steps // record_every + 1 + (1 if n_steps % record_every else 0)
    hist = np.zeros((n_rec, grid.total_points))
    rec_steps = []
    for c, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        n = min(MC_CHUNK, n_samples - c * MC_CHUNK)
        x = _initial_samples(x0, grid, n, rng)
        r = 0
        hist[r] += _histogram(x, grid)
        if c == 0:
            rec_steps.append(0)
        noise = np.empty_like(x)
        scale = np.sqrt(2 * dt) * np.asarray(model.noise_gains(x), dtype=float)
        for m in range(1, n_steps + 1):
            if not model.constant_noise:
                scale = np.sqrt(2 * dt) * np.asarray(model.noise_gains(x), dtype=float)
            rng.standard_normal(out=noise)
            noise *= scale
            x += model.fp_drift(x) * dt
            x += noise
            _reflect(x, lo, hi)
            if m % record_every == 0 or m == n_steps:
                r += 1
                hist[r] += _histogram(x, grid)
                if c == 0:
                    rec_steps.append(m)
    states = hist / n_samples
    meta = {"solver": "sde_mc", "dt": dt, "n_steps": n_steps, "n_samples": n_samples, "seed": seed}
    return Trajectory(np.array(rec_steps) * dt, states, meta)


def sde_monte_carlo(model, grid, x0, dt, n_steps, n_samples, seed) -> ProbVector:
    """Final-time histogram of :func:`sde_trajectory`."""
    traj = sde_trajectory(model, grid, x0, dt, n_steps, n_samples, seed)
    return ProbVector.from_array(traj.states[-1])
