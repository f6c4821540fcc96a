"""Schrodingerisation with a discretised Fourier register.

The warped-phase lift ``v(t, w) = e^{-w} p(t)`` (``w > 0``) turns ``dp/dt = R p``
into a family of independent unitary problems indexed by the Fourier
variable ``eta``:

    d/dt pbar(t, eta) = -i H_S(eta) pbar,     H_S(eta) = 2 pi eta R_h + i R_a,

starting from ``pbar(0, eta) = w(eta) p0`` with ``w(eta) = 2 / (1 + 4 pi^2 eta^2)``.
``p(t)`` is recovered by transforming back to ``w`` and integrating over
``w >= 0`` (or from an offset ``w0`` onward, rescaled by ``e^{w0}``; see
:func:`resolve_offset`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .._exceptions import AliasingWarning, NumericalError, ValidationError
from ..classical import Trajectory
from ..generator import ProbVector, _as_dense, spectral_abscissa

HERM_TOL = 1e-12
ALIAS_FLAG = -1e-3
IMAG_FLAG = 1e-8
MIN_W_POINTS = 8
PROPAGATOR_DIM_LIMIT = 64


def fourier_weight(eta) -> np.ndarray:
    """Fourier transform of ``e^{-|w|}``."""
    eta = np.asarray(eta, dtype=float)
    return 2.0 / (1.0 + 4.0 * np.pi**2 * eta**2)


@dataclass(frozen=True)
class FourierRegister:
    """Symmetric ``eta`` grid with ``2 * eta_max / d_eta + 1`` points.

    The conjugate ``w`` grid has spacing ``1 / (2 eta_max)`` and covers
    ``[0, 1 / (2 d_eta))``.
    """

    eta_max: float
    d_eta: float

    def __post_init__(self):
        if not (self.eta_max > 0 and self.d_eta > 0):
            raise ValidationError("eta_max and d_eta must be positive")
        n = self.eta_max / self.d_eta
        if abs(n - round(n)) > 1e-9 * max(n, 1.0):
            raise ValidationError(f"d_eta={self.d_eta} does not divide eta_max={self.eta_max}")

    @property
    def n_half(self) -> int:
        return int(round(self.eta_max / self.d_eta))

    @property
    def eta_points(self) -> np.ndarray:
        return np.arange(-self.n_half, self.n_half + 1) * self.d_eta

    @property
    def weights(self) -> np.ndarray:
        return fourier_weight(self.eta_points)

    @property
    def d_w(self) -> float:
        return 1.0 / (2.0 * self.eta_max)

    def w_points(self, offset: float = 0.0) -> np.ndarray:
        n_w = self.n_half
        if n_w - 1 < MIN_W_POINTS:
            raise ValidationError(
                f"register resolves only {n_w - 1} positive w points; need at least {MIN_W_POINTS}"
            )
        return offset + np.arange(n_w) * self.d_w

    def kernel(self, offset: float = 0.0, eta=None) -> np.ndarray:
        """Recovery weights ``K_k`` so that ``p = Re sum_k K_k pbar(eta_k)``."""
        w = self.w_points(offset)
        c = np.ones_like(w)
        c[0] = 0.5
        eta = self.eta_points if eta is None else np.asarray(eta, dtype=float)
        phase = np.exp(2j * np.pi * np.outer(eta, w))
        return self.d_eta * self.d_w * np.exp(offset) * (phase @ c)


@dataclass(frozen=True)
class HermitianSplit:
    R_h: np.ndarray
    R_a: np.ndarray

    @property
    def dim(self) -> int:
        return self.R_h.shape[0]

    @property
    def is_real(self) -> bool:
        return np.isrealobj(self.R_h) and np.isrealobj(self.R_a)


def split_hermitian(R) -> HermitianSplit:
    M = _as_dense(R)
    Mh = M.conj().T
    R_h = (M + Mh) / 2
    R_a = (M - Mh) / 2
    res = max(np.abs(R_h - R_h.conj().T).max(initial=0.0), np.abs(R_a + R_a.conj().T).max(initial=0.0))
    if res > HERM_TOL:
        raise NumericalError(f"Hermitian split residual {res:.3e}")
    return HermitianSplit(R_h, R_a)


def build_hs(split: HermitianSplit, eta: float) -> np.ndarray:
    """``H_S(eta) = 2 pi eta R_h + i R_a``, Hermitian by construction (checked)."""
    H = 2 * np.pi * eta * split.R_h + 1j * split.R_a
    res = np.abs(H - H.conj().T).max(initial=0.0)
    if res > HERM_TOL * max(1.0, np.abs(H).max(initial=0.0)):
        raise NumericalError(f"H_S is not Hermitian (residual {res:.3e})")
    return H


def resolve_offset(offset, split: HermitianSplit, t: float) -> float:
    """Recovery offset ``w0``.

    A number is used as given. ``"auto"`` picks ``w0 = max(0, lambda_max(R_h)) t``:
    for ``w`` below that value the lifted solution is contaminated by
    inflow from ``w < 0`` and ``v(t, w) != e^{-w} p(t)``.
    """
    if isinstance(offset, str):
        if offset != "auto":
            raise ValidationError(f"offset must be a number or 'auto', got {offset!r}")
        top = float(np.linalg.eigvalsh(split.R_h).max())
        return max(0.0, top) * t
    offset = float(offset)
    if offset < 0:
        raise ValidationError("offset must be >= 0")
    return offset


def _check_stable(split: HermitianSplit):
    a = spectral_abscissa(split.R_h + split.R_a)
    if a > 1e-8:
        raise NumericalError(f"spectral abscissa {a:.3e} > 0; Schrodingerisation needs a non-expanding R")


def _eta_half(register: FourierRegister, split: HermitianSplit):
    """Etas actually evolved, plus multiplicity for the conjugate mirror."""
    eta = register.eta_points
    if split.is_real:
        eta = eta[register.n_half :]
        mult = np.where(eta > 0, 2.0, 1.0)
        return eta, mult
    return eta, np.ones_like(eta)


def schrod_evolve(register: FourierRegister, split: HermitianSplit, p0, t: float, check: bool = True) -> np.ndarray:
    """``pbar(t, eta_k) = exp(-i H_S(eta_k) t) w(eta_k) p0`` for every register point.

    Returns an array of shape ``(n_eta, dim)``. For real ``R`` and ``p0`` only
    ``eta >= 0`` is evolved; ``pbar(-eta) = conj(pbar(eta))`` fills the rest.
    """
    if check:
        _check_stable(split)
    v = np.asarray(p0.values if isinstance(p0, ProbVector) else p0)
    real = split.is_real and np.isrealobj(v)
    eta = register.eta_points[register.n_half :] if real else register.eta_points
    out = np.empty((eta.size, split.dim), dtype=complex)
    for k, e in enumerate(eta):
        lam, V = np.linalg.eigh(build_hs(split, e))
        out[k] = V @ (np.exp(-1j * lam * t) * (V.conj().T @ (fourier_weight(e) * v)))
    if real:
        out = np.concatenate([out[:0:-1].conj(), out])
    return out


@dataclass(frozen=True)
class Recovery:
    p: ProbVector
    raw: np.ndarray
    min_entry: float
    imag_residue: float
    mass: float

    @property
    def aliased(self) -> bool:
        return self.min_entry < ALIAS_FLAG


def _finish(vec: np.ndarray) -> Recovery:
    imag = float(np.abs(vec.imag).max(initial=0.0)) if np.iscomplexobj(vec) else 0.0
    raw = vec.real.astype(float)
    mass = float(raw.sum())
    if not mass > 0:
        raise NumericalError("recovered vector has non-positive total mass")
    raw = raw / mass
    low = float(raw.min())
    if low < ALIAS_FLAG:
        warnings.warn(
            f"recovered distribution has negative entry {low:.3e}; register truncation or aliasing",
            AliasingWarning,
            stacklevel=3,
        )
    return Recovery(ProbVector.from_array(raw, clip=True), raw, low, imag, mass)


def schrod_recover(register: FourierRegister, pbar: np.ndarray, offset: float = 0.0) -> Recovery:
    """Transform back to ``w`` and integrate the lift over ``w >= offset``."""
    pbar = np.asarray(pbar)
    if pbar.shape[0] != register.eta_points.size:
        raise ValidationError(f"expected {register.eta_points.size} eta rows, got {pbar.shape[0]}")
    return _finish(register.kernel(offset) @ pbar)


def schrod_propagators(split: HermitianSplit, t: float, specs, check: bool = True) -> list:
    """Recovered one-interval maps ``M`` with ``p(t) ~ M p(0)`` for several registers.

    ``specs`` is a list of ``(FourierRegister, offset)`` pairs. The eta grids
    are merged so each distinct ``eta`` is diagonalised once; registers whose
    grids nest (for instance ``d_eta`` 0.01 and 0.1, or ``eta_max`` 5 and 10)
    share all the work.
    """
    if check:
        _check_stable(split)
    specs = [(reg, resolve_offset(off, split, t)) for reg, off in specs]
    tables = []
    keys = set()
    for reg, off in specs:
        eta, mult = _eta_half(reg, split)
        coef = reg.kernel(off, eta) * fourier_weight(eta) * mult
        table = {round(float(e), 9): c for e, c in zip(eta, coef)}
        tables.append(table)
        keys.update(table)
    real = split.is_real
    out = [np.zeros((split.dim, split.dim), dtype=float if real else complex) for _ in specs]
    for key in sorted(keys):
        lam, V = np.linalg.eigh(build_hs(split, key))
        E = (V * np.exp(-1j * lam * t)) @ V.conj().T
        for M, table in zip(out, tables):
            c = table.get(key)
            if c is not None:
                M += (c * E).real if real else c * E
    return out


def schrod_propagator(split: HermitianSplit, register: FourierRegister, t: float, offset="auto") -> np.ndarray:
    return schrod_propagators(split, t, [(register, offset)])[0]


def run_schrod(
    R,
    p0,
    dt: float,
    n_steps: int,
    eta_max: float = 10.0,
    d_eta: float = 0.01,
    offset="auto",
    mode: str = "restart",
    record_every: int = 1,
    propagator: np.ndarray | None = None,
) -> Trajectory:
    """Schrodingerised trajectory at ``t = m dt``.

    ``mode="restart"`` re-lifts the recovered vector after every interval
    ``dt`` (each interval is one full lift / evolve / recover cycle; its linear
    map can be passed in as ``propagator``). ``mode="direct"`` evolves the
    register once from ``t = 0`` to every snapshot time.
    The log carries the recovered mass, the most negative recovered entry and
    the imaginary residue per snapshot.
    """
    if mode not in ("restart", "direct"):
        raise ValidationError(f"mode must be 'restart' or 'direct', got {mode!r}")
    if not dt > 0 or n_steps < 0:
        raise ValidationError("need dt > 0 and n_steps >= 0")
    register = FourierRegister(eta_max, d_eta)
    split = split_hermitian(R)
    _check_stable(split)
    v0 = (p0 if isinstance(p0, ProbVector) else ProbVector.from_array(p0)).values
    times, states, drift, log = [0.0], [v0], [0.0], []

    def record(m, rec: Recovery):
        log.append(
            {
                "step": m,
                "mass": rec.mass,
                "min_entry": rec.min_entry,
                "imag_residue": rec.imag_residue,
                "l1_drift": abs(rec.mass - 1.0),
            }
        )
        times.append(m * dt)
        states.append(rec.p.values)
        drift.append(abs(rec.mass - 1.0))

    if mode == "restart":
        M = propagator if propagator is not None else schrod_propagator(split, register, dt, offset)
        q = v0.copy()
        for m in range(1, n_steps + 1):
            rec = _finish(M @ q)
            q = rec.raw
            if m % record_every == 0 or m == n_steps:
                record(m, rec)
    else:
        steps = [m for m in range(1, n_steps + 1) if m % record_every == 0 or m == n_steps]
        t_rec = np.array(steps) * dt
        w0 = np.array([resolve_offset(offset, split, t) for t in t_rec])
        eta, mult = _eta_half(register, split)
        acc = np.zeros((t_rec.size, split.dim), dtype=complex)
        kern = np.array([register.kernel(o, eta) for o in w0])  # (n_t, n_eta)
        for k, e in enumerate(eta):
            lam, V = np.linalg.eigh(build_hs(split, e))
            c = V.conj().T @ (fourier_weight(e) * v0)
            evolved = (np.exp(-1j * np.outer(t_rec, lam)) * c) @ V.T  # (n_t, dim)
            coef = kern[:, k] * mult[k]
            acc += (coef[:, None] * evolved).real if split.is_real else coef[:, None] * evolved
        for m, row in zip(steps, acc):
            record(m, _finish(row))
    meta = {"solver": "q_schrod", "dt": dt, "n_steps": n_steps, "eta_max": eta_max, "d_eta": d_eta,
            "offset": offset, "mode": mode}
    return Trajectory(np.array(times), np.array(states), meta, np.array(drift), log)


def propagator_check(R, t: float, s, eta_max=50.0, d_eta: float = 0.002, chunk: int = 4096):
    """``max |P_S(t, s) - e^{-s} e^{R t}|`` with ``P_S`` by trapezoid over ``eta``.

    ``P_S(t, s) = int w(eta) e^{2 pi i eta s} exp(-i H_S(eta) t) d eta``; the
    identity ``P_S = e^{-s} e^{Rt}`` holds for ``s >= lambda_max(R_h) t``.
    ``s`` and ``eta_max`` may be sequences; every ``eta_max`` must be a
    multiple of ``d_eta`` and the result then has shape ``(len(eta_max), len(s))``.
    Eigendecompositions are shared across all of them.
    """
    M = _as_dense(R)
    n = M.shape[0]
    if n > PROPAGATOR_DIM_LIMIT:
        raise ValidationError(f"propagator_check is dense; dim must be <= {PROPAGATOR_DIM_LIMIT}, got {n}")
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    cuts = np.atleast_1d(np.asarray(eta_max, dtype=float))
    if not np.all(s_arr > 0):
        raise ValidationError("s must be > 0")
    regs = [FourierRegister(float(e), d_eta) for e in cuts]
    split = split_hermitian(M)
    real = split.is_real
    big = max(regs, key=lambda r: r.n_half)
    eta = big.eta_points[big.n_half :] if real else big.eta_points
    # trapezoid weights per cutoff, zero outside it
    c = np.zeros((len(regs), eta.size))
    for i, reg in enumerate(regs):
        inside = np.abs(eta) <= reg.eta_max * (1 + 1e-12)
        c[i, inside] = d_eta
        c[i, np.isclose(np.abs(eta), reg.eta_max)] = d_eta / 2
    if real:
        c[:, eta > 0] *= 2  # the eta < 0 half is the complex conjugate
    phase = fourier_weight(eta) * np.exp(2j * np.pi * np.outer(s_arr, eta))  # (n_s, n_eta)
    P = np.zeros((len(regs), s_arr.size, n, n), dtype=complex)
    for lo in range(0, eta.size, chunk):
        e = eta[lo : lo + chunk]
        H = 2 * np.pi * e[:, None, None] * split.R_h + 1j * split.R_a
        lam, V = np.linalg.eigh(H)
        E = np.einsum("kij,kj,klj->kil", V, np.exp(-1j * lam * t), V.conj())
        coef = c[:, None, lo : lo + chunk] * phase[None, :, lo : lo + chunk]
        P += np.tensordot(coef, E, axes=([2], [0]))
    if real:
        P = P.real
    exact = np.exp(-s_arr)[:, None, None] * scipy.linalg.expm(M * t)
    err = np.abs(P - exact[None]).max(axis=(2, 3))
    if np.ndim(s) == 0 and np.ndim(eta_max) == 0:
        return float(err[0, 0])
    return err
