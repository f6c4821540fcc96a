"""Normalised statevector plus the bookkeeping needed to read out ``p``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._exceptions import NumericalError, ValidationError
from ..generator import ProbVector

IMAG_TOL = 1e-12
NORM_TOL = 1e-12


@dataclass(frozen=True)
class EmulatorState:
    """Amplitude encoding ``|p> = p / ||p||_2`` of a (real) probability vector.

    ``norm`` is the L2 norm of the unnormalised vector the state represents,
    so ``norm * amplitudes`` is that vector; ``l1_scale`` is its component sum
    (1 for a conserving evolution started from a ProbVector).
    ``cumulative_success`` is the product of all post-selection probabilities
    so far.
    """

    amplitudes: np.ndarray
    cumulative_success: float = 1.0
    norm: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).ravel()
        nrm = np.linalg.norm(a)
        if abs(nrm - 1.0) > NORM_TOL:
            raise ValidationError(f"amplitudes must be L2-normalised, got norm {nrm!r}")
        if not 0.0 < self.cumulative_success <= 1.0 + 1e-10:
            raise ValidationError(f"cumulative_success must lie in (0, 1], got {self.cumulative_success}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_prob(cls, p) -> "EmulatorState":
        v = np.asarray(p.values if isinstance(p, ProbVector) else p, dtype=float)
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise ValidationError("cannot encode the zero vector")
        return cls(v / nrm, 1.0, float(nrm))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def l1_scale(self) -> float:
        return float(self.amplitudes.real.sum() * self.norm)

    def real_vector(self) -> np.ndarray:
        """Represented vector with imaginary roundoff removed."""
        imag = np.abs(self.amplitudes.imag).max(initial=0.0)
        if imag > IMAG_TOL:
            raise NumericalError(f"state carries imaginary amplitude {imag:.3e}; expected a real vector")
        return self.amplitudes.real * self.norm

    def to_prob(self) -> tuple[ProbVector, float]:
        """L1-normalised readout and the most negative entry before clipping."""
        v = self.real_vector()
        total = v.sum()
        if not total > 0:
            raise NumericalError("represented vector has non-positive total mass")
        v = v / total
        return ProbVector.from_array(v, clip=True), float(v.min())
