"""scikit-learn style wrappers around the solvers.

``fit`` takes the generator ``R``; ``transform`` maps a batch of initial
distributions (one per row) to the distributions at ``t = n_steps * dt``.

>>> est = BlockEulerPropagator(dt=0.1, n_steps=40).fit(R)   # doctest: +SKIP
>>> final = est.transform(P0)                               # doctest: +SKIP
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._exceptions import ValidationError
from .classical import Trajectory, euler_propagate, expm_propagate
from .generator import GeneratorMatrix, ProbVector
from .quantum import (
    FourierRegister,
    run_block_euler,
    run_lcu,
    run_schrod,
    schrod_propagator,
    split_hermitian,
)

__all__ = [
    "ExpmPropagator",
    "EulerPropagator",
    "BlockEulerPropagator",
    "LcuPropagator",
    "SchrodPropagator",
]


class _Propagator(TransformerMixin, BaseEstimator):
    def _validate_generator(self, R) -> GeneratorMatrix:
        if isinstance(R, GeneratorMatrix):
            return R
        M = check_array(R, accept_sparse="csr", dtype=np.float64)
        if M.shape[0] != M.shape[1]:
            raise ValidationError(f"generator must be square, got shape {M.shape}")
        return GeneratorMatrix.from_dense(M.toarray() if sp.issparse(M) else M)

    def _check_params(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValidationError(f"n_steps must be a non-negative integer, got {self.n_steps}")

    def fit(self, R, y=None):
        self._check_params()
        self.generator_ = self._validate_generator(R)
        self.n_features_in_ = self.generator_.dim
        self._prepare()
        return self

    def _prepare(self):
        pass

    def _rows(self, X) -> np.ndarray:
        check_is_fitted(self, "generator_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"X has {X.shape[1]} columns, generator has dimension {self.n_features_in_}")
        if np.any(X < 0) or np.any(X.sum(axis=1) <= 0):
            raise ValidationError("rows of X must be non-negative with positive mass")
        return X / X.sum(axis=1, keepdims=True)

    def predict_trajectory(self, p0) -> Trajectory:
        """Full trajectory from one initial distribution."""
        row = self._rows(np.atleast_2d(np.asarray(getattr(p0, "values", p0), dtype=float)))[0]
        return self._trajectory(row)

    def transform(self, X) -> np.ndarray:
        X = self._rows(X)
        return np.vstack([self._trajectory(row).states[-1] for row in X])


class ExpmPropagator(_Propagator):
    """Exact propagation by the matrix exponential."""

    def __init__(self, dt=0.1, n_steps=40):
        self.dt = dt
        self.n_steps = n_steps

    def _trajectory(self, p0):
        return expm_propagate(self.generator_, p0, np.arange(self.n_steps + 1) * self.dt)


class EulerPropagator(_Propagator):
    """Classical explicit Euler."""

    def __init__(self, dt=0.1, n_steps=40):
        self.dt = dt
        self.n_steps = n_steps

    def _trajectory(self, p0):
        return euler_propagate(self.generator_, p0, self.dt, self.n_steps)


class BlockEulerPropagator(_Propagator):
    """Post-selected block-encoded Euler; ``cumulative_success_`` is set per call."""

    def __init__(self, dt=0.1, n_steps=40, subnormalize=True):
        self.dt = dt
        self.n_steps = n_steps
        self.subnormalize = subnormalize

    def _trajectory(self, p0):
        out = run_block_euler(self.generator_, ProbVector(p0), self.dt, self.n_steps, self.subnormalize)
        self.cumulative_success_ = out.cumulative_success
        self.expected_calls_ = out.expected_calls
        return out.trajectory


class LcuPropagator(_Propagator):
    """Euler step as a linear combination of two unitaries."""

    def __init__(self, dt=0.01, n_steps=100):
        self.dt = dt
        self.n_steps = n_steps

    def _trajectory(self, p0):
        out = run_lcu(self.generator_, ProbVector(p0), self.dt, self.n_steps)
        self.cumulative_success_ = out.cumulative_success
        self.expected_calls_ = out.expected_calls
        return out.trajectory


class SchrodPropagator(_Propagator):
    """Schrodingerisation with restarts every ``dt``.

    The one-interval map is built once in ``fit`` and stored as ``propagator_``.
    """

    def __init__(self, dt=0.1, n_steps=40, eta_max=10.0, d_eta=0.01, offset="auto"):
        self.dt = dt
        self.n_steps = n_steps
        self.eta_max = eta_max
        self.d_eta = d_eta
        self.offset = offset

    def _prepare(self):
        reg = FourierRegister(self.eta_max, self.d_eta)
        self.propagator_ = schrod_propagator(split_hermitian(self.generator_), reg, self.dt, self.offset)

    def _trajectory(self, p0):
        return run_schrod(
            self.generator_, p0, self.dt, self.n_steps, self.eta_max, self.d_eta, self.offset,
            propagator=self.propagator_,
        )
