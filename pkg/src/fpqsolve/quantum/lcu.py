"""Forward Euler as a linear combination of two unitaries.

Register layout (outer to inner): selection ancilla ``a``, dilation ancilla
``a'``, system. With ``alpha1 = 1`` and ``alpha2 = sqrt(dt)``,

    U1 = I,    U2 = SWAP_{a'} exp(-i H_R sqrt(dt)),    H_R = [[0, -i R^H], [i R, 0]],

and ``B^H U_com B`` (``U_com`` controlled on ``a``) leaves, on ``a = 0`` and
``a' = 0``, the vector ``((I + dt R) p + O(dt^2)) / (1 + sqrt(dt))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._exceptions import PostSelectionError, StepSizeError, ValidationError
from ..classical import Trajectory
from ..generator import _as_dense
from .block_euler import MIN_SUCCESS, QuantumRun, _encode, expected_calls
from .state import EmulatorState

UNITARITY_TOL = 1e-10


def build_hr(R) -> np.ndarray:
    """Hermitian dilation ``[[0, -i R^H], [i R, 0]]``."""
    M = _as_dense(R).astype(complex)
    n = M.shape[0]
    Z = np.zeros((n, n), dtype=complex)
    H = np.block([[Z, -1j * M.conj().T], [1j * M, Z]])
    res = np.abs(H - H.conj().T).max(initial=0.0)
    if res > 1e-12:
        raise ValidationError(f"H_R is not Hermitian (residual {res:.3e})")
    return H


def combination_unitary(alpha1: float, alpha2: float) -> np.ndarray:
    s = alpha1 + alpha2
    return np.array([[np.sqrt(alpha1), -np.sqrt(alpha2)], [np.sqrt(alpha2), np.sqrt(alpha1)]]) / np.sqrt(s)


@dataclass(frozen=True)
class LcuStep:
    dt: float
    B: np.ndarray
    H_R: np.ndarray
    U2: np.ndarray
    alphas: tuple

    @property
    def dim(self) -> int:
        return self.H_R.shape[0] // 2

    def combined(self) -> np.ndarray:
        """``(alpha1 U1 + alpha2 U2) / (alpha1 + alpha2)`` on the ``a'`` + system space."""
        a1, a2 = self.alphas
        return (a1 * np.eye(self.U2.shape[0]) + a2 * self.U2) / (a1 + a2)


def _swap(n: int) -> np.ndarray:
    Z, I = np.zeros((n, n)), np.eye(n)
    return np.block([[Z, I], [I, Z]])


def build_lcu(R, dt: float) -> LcuStep:
    if not dt > 0 or not np.isfinite(dt):
        raise ValidationError(f"dt must be finite and > 0, got {dt}")
    H = build_hr(R)
    n = H.shape[0] // 2
    tau = np.sqrt(dt)
    lam, V = np.linalg.eigh(H)
    E = (V * np.exp(-1j * lam * tau)) @ V.conj().T
    U2 = _swap(n) @ E
    if np.isrealobj(_as_dense(R)):
        # -i H_R is real antisymmetric, so the exponential is real orthogonal
        U2 = U2.real
    res = np.abs(U2.conj().T @ U2 - np.eye(2 * n)).max()
    if res > UNITARITY_TOL:
        raise StepSizeError(f"U2 is not unitary (residual {res:.3e})")
    alphas = (1.0, float(tau))
    return LcuStep(float(dt), combination_unitary(*alphas), H, U2, alphas)


def lcu_step(step: LcuStep, state: EmulatorState) -> tuple[EmulatorState, float, float]:
    """One step with double post-selection; returns ``(state, p_a, p_a')``."""
    n = step.dim
    if state.dim != n:
        raise ValidationError(f"state has dimension {state.dim}, step expects {n}")
    inner = np.concatenate([state.amplitudes, np.zeros(n)])  # |0_a'> (x) |p>
    full = np.kron(step.B[:, 0], inner)  # B on |0_a>
    half = full.size // 2
    full = np.concatenate([full[:half], step.U2 @ full[half:]])  # controlled U2
    Bh = step.B.conj().T
    a0 = Bh[0, 0] * full[:half] + Bh[0, 1] * full[half:]
    p_a = float(np.vdot(a0, a0).real)
    if p_a < MIN_SUCCESS:
        raise PostSelectionError(f"ancilla a post-selection probability {p_a:.3e} vanishes")
    kept = a0[:n]
    joint = float(np.vdot(kept, kept).real)
    p_ap = joint / p_a
    if p_ap < MIN_SUCCESS:
        raise PostSelectionError(f"ancilla a' post-selection probability {p_ap:.3e} vanishes")
    root = np.sqrt(joint)
    a1, a2 = step.alphas
    new = EmulatorState(kept / root, state.cumulative_success * joint, state.norm * root * (a1 + a2))
    return new, p_a, p_ap


def run_lcu(R, p0, dt: float, n_steps: int, record_every: int = 1) -> QuantumRun:
    """Iterate :func:`lcu_step`; per-step success is ``p_a * p_a'``."""
    if n_steps < 0:
        raise ValidationError("n_steps must be >= 0")
    state = _encode(p0)
    p, _ = state.to_prob()
    times, states, drift, log, probs = [0.0], [p.values], [0.0], [], []
    step = build_lcu(R, dt) if n_steps else None
    for m in range(1, n_steps + 1):
        state, p_a, p_ap = lcu_step(step, state)
        prob = p_a * p_ap
        probs.append(prob)
        d = abs(state.l1_scale - 1.0)
        p, low = state.to_prob()
        log.append(
            {
                "step": m,
                "success_prob": prob,
                "cumulative_success": state.cumulative_success,
                "l1_drift": d,
                "p_a": p_a,
                "p_a_prime": p_ap,
                "min_entry": low,
            }
        )
        if m % record_every == 0 or m == n_steps:
            times.append(m * dt)
            states.append(p.values)
            drift.append(d)
    calls = expected_calls(float(np.mean(probs)), n_steps) if probs else 0.0
    meta = {"solver": "q_lcu", "dt": dt, "n_steps": n_steps, "expected_calls": calls}
    traj = Trajectory(np.array(times), np.array(states), meta, np.array(drift), log)
    return QuantumRun(traj, state.cumulative_success, calls)
