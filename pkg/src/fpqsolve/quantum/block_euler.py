"""Forward Euler through a unitary block encoding of ``A = I + dt R``.

One step prepares ``|0_a>|p>``, applies

    U = [[ sqrt(I - A^H A),  A^H              ],
         [ A,               -sqrt(I - A A^H)  ]]

(ancilla is the outer index), measures the ancilla and keeps outcome 1, then
flips it back. The kept branch is ``A|p>`` with probability ``||A|p>||^2``.
The emulator follows that branch deterministically and records the price.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .._exceptions import InvalidGeneratorError, PostSelectionError, StepSizeError, ValidationError
from ..classical import Trajectory
from ..generator import ProbVector, _as_dense
from .state import EmulatorState

logger = logging.getLogger(__name__)

HERM_NEG_TOL = 1e-8
CLAMP_TOL = 1e-12
ZERO_MODE_RTOL = 1e-10
UNITARITY_TOL = 1e-8
MIN_SUCCESS = 1e-14


def _psd_sqrt(H: np.ndarray) -> np.ndarray:
    """Square root of a Hermitian matrix that should be PSD."""
    lam, V = np.linalg.eigh(H)
    if lam.min() < -HERM_NEG_TOL:
        raise StepSizeError(f"I - A^H A is indefinite (eigenvalue {lam.min():.3e}); the step is too large")
    lam = np.where(lam < CLAMP_TOL, np.clip(lam, 0.0, None), lam)
    return (V * np.sqrt(lam)) @ V.conj().T


def max_step_size(R) -> float:
    """Largest ``dt`` for which ``A A^H <= I`` is guaranteed.

    ``lambda*_min(-R - R^H) / lambda_max(R R^H)`` with zero modes of the
    Hermitian part (below ``1e-10`` of its top eigenvalue) excluded. Requires
    ``R + R^H`` to be negative semidefinite.
    """
    M = _as_dense(R).astype(complex)
    lam = np.linalg.eigvalsh(-(M + M.conj().T))
    if lam.min() < -HERM_NEG_TOL:
        raise InvalidGeneratorError(
            f"-(R + R^H) has eigenvalue {lam.min():.3e} < 0; the Euler step cannot be a contraction for small dt"
        )
    top = lam.max()
    if top <= 0:
        raise InvalidGeneratorError("R has a vanishing Hermitian part")
    nonzero = lam[lam > ZERO_MODE_RTOL * top]
    return float(nonzero.min() / np.linalg.eigvalsh(M @ M.conj().T).max())


@dataclass(frozen=True)
class BlockEncodedStep:
    """Unitary ``U`` whose lower-left block is ``A / subnormalization``."""

    U: np.ndarray
    dt: float
    A: np.ndarray
    subnormalization: float = 1.0

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def unitarity_residual(self) -> float:
        return float(np.abs(self.U.conj().T @ self.U - np.eye(self.U.shape[0])).max())


def build_block_encoding(R, dt: float, subnormalize: bool = False, strict: bool = True) -> BlockEncodedStep:
    """Block-encode ``A = I + dt R``.

    With ``subnormalize`` the encoded block is ``A / alpha`` with
    ``alpha = max(1, ||A||_2)``, which is a valid encoding for any ``dt``.
    Otherwise ``strict`` also rejects ``dt`` above :func:`max_step_size`.
    """
    if not dt >= 0 or not np.isfinite(dt):
        raise ValidationError(f"dt must be finite and >= 0, got {dt}")
    M = _as_dense(R)
    n = M.shape[0]
    A = np.eye(n) + dt * M
    alpha = 1.0
    if subnormalize:
        alpha = max(1.0, float(np.linalg.norm(A, 2)))
    elif strict and dt > 0:
        bound = max_step_size(M)
        if dt > bound * (1 + 1e-12):
            raise StepSizeError(f"dt={dt} exceeds the contraction bound {bound:.6g}")
    Ab = A / alpha
    Ah = Ab.conj().T
    I = np.eye(n)
    U = np.block([[_psd_sqrt(I - Ah @ Ab), Ah], [Ab, -_psd_sqrt(I - Ab @ Ah)]])
    step = BlockEncodedStep(U, float(dt), A, alpha)
    res = step.unitarity_residual()
    if res > UNITARITY_TOL:
        raise StepSizeError(f"block encoding is not unitary (residual {res:.3e})")
    return step


def block_euler_step(step: BlockEncodedStep, state: EmulatorState) -> tuple[EmulatorState, float]:
    """Apply ``U``, keep ancilla outcome 1, flip it back to 0."""
    n = step.dim
    if state.dim != n:
        raise ValidationError(f"state has dimension {state.dim}, step expects {n}")
    psi = np.concatenate([state.amplitudes, np.zeros(n, dtype=complex)])
    out = step.U @ psi
    kept = out[n:]
    prob = float(np.vdot(kept, kept).real)
    if prob < MIN_SUCCESS:
        raise PostSelectionError(f"post-selection probability {prob:.3e} vanishes")
    root = np.sqrt(prob)
    new = EmulatorState(kept / root, state.cumulative_success * prob, state.norm * root * step.subnormalization)
    return new, prob


def expected_calls(p: float, n: int) -> float:
    """Mean number of solver calls until ``n`` consecutive successes, ``(p^-n - 1) / (1 - p)``."""
    if n < 0:
        raise ValidationError("n must be >= 0")
    if not 0 < p <= 1 + 1e-12:
        raise ValidationError(f"success probability must lie in (0, 1], got {p}")
    if n == 0:
        return 0.0
    logp = np.log(min(p, 1.0))
    if logp == 0.0:
        return float(n)
    return float(np.expm1(-n * logp) / -np.expm1(logp))


class QuantumRun(NamedTuple):
    trajectory: Trajectory
    cumulative_success: float
    expected_calls: float


def _encode(p0) -> EmulatorState:
    v = p0.values if isinstance(p0, ProbVector) else ProbVector.from_array(p0).values
    return EmulatorState.from_prob(v)


def run_block_euler(
    R, p0, dt: float, n_steps: int, subnormalize: bool = True, record_every: int = 1
) -> QuantumRun:
    """Iterate post-selected block-encoded Euler steps.

    Snapshots are the L1-normalised readouts of the kept branch; the log has
    one row per step with ``success_prob``, ``cumulative_success``,
    ``l1_drift`` (distance of the represented vector's sum from 1) and
    ``min_entry`` (most negative readout entry before clipping).
    """
    if n_steps < 0:
        raise ValidationError("n_steps must be >= 0")
    step = build_block_encoding(R, dt, subnormalize=subnormalize)
    state = _encode(p0)
    p, _ = state.to_prob()
    times, states, drift, log, probs = [0.0], [p.values], [0.0], [], []
    for m in range(1, n_steps + 1):
        state, prob = block_euler_step(step, state)
        probs.append(prob)
        d = abs(state.l1_scale - 1.0)
        p, low = state.to_prob()
        log.append(
            {
                "step": m,
                "success_prob": prob,
                "cumulative_success": state.cumulative_success,
                "l1_drift": d,
                "min_entry": low,
            }
        )
        if m % record_every == 0 or m == n_steps:
            times.append(m * dt)
            states.append(p.values)
            drift.append(d)
    calls = expected_calls(float(np.mean(probs)), n_steps) if probs else 0.0
    meta = {
        "solver": "q_block",
        "dt": dt,
        "n_steps": n_steps,
        "subnormalization": step.subnormalization,
        "expected_calls": calls,
    }
    traj = Trajectory(np.array(times), np.array(states), meta, np.array(drift), log)
    return QuantumRun(traj, state.cumulative_success, calls)
