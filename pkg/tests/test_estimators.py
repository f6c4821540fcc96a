import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fpqsolve import expm_propagate
from fpqsolve._exceptions import ValidationError
from fpqsolve.estimators import (
    BlockEulerPropagator,
    EulerPropagator,
    ExpmPropagator,
    LcuPropagator,
    SchrodPropagator,
)


def batch(n, rng, k=3):
    return rng.dirichlet(np.ones(n), size=k)


@pytest.mark.parametrize(
    "est",
    [
        ExpmPropagator(dt=0.1, n_steps=5),
        EulerPropagator(dt=0.05, n_steps=10),
        BlockEulerPropagator(dt=0.05, n_steps=10),
        LcuPropagator(dt=0.005, n_steps=100),
        SchrodPropagator(dt=0.1, n_steps=5, eta_max=10, d_eta=0.01),
    ],
)
def test_transform_close_to_exact(est, dw_rates, rng):
    X = batch(21, rng)
    out = clone(est).fit(dw_rates).transform(X)
    exact = np.vstack([expm_propagate(dw_rates, x, [0.5]).states[-1] for x in X])
    assert out.shape == X.shape
    np.testing.assert_allclose(out.sum(axis=1), 1.0)
    assert np.abs(out - exact).sum(axis=1).max() < 0.1


def test_params_roundtrip():
    est = SchrodPropagator(dt=0.2, eta_max=5, d_eta=0.05)
    assert est.get_params()["d_eta"] == 0.05
    est.set_params(n_steps=3)
    assert clone(est).n_steps == 3


def test_dense_input_and_trajectory(dw_rates):
    est = BlockEulerPropagator(dt=0.1, n_steps=4).fit(dw_rates.dense())
    assert est.n_features_in_ == 21
    p0 = np.zeros(21)
    p0[10] = 1
    tr = est.predict_trajectory(p0)
    assert len(tr) == 5 and 0 < est.cumulative_success_ < 1
    assert est.expected_calls_ >= 4


def test_input_checks(dw_rates):
    with pytest.raises(NotFittedError):
        ExpmPropagator().transform(np.ones((1, 21)))
    est = ExpmPropagator().fit(dw_rates)
    with pytest.raises(ValidationError):
        est.transform(np.ones((1, 5)))
    with pytest.raises(ValidationError):
        est.transform(-np.ones((1, 21)))
    with pytest.raises(ValidationError):
        ExpmPropagator().fit(np.zeros((3, 4)))
    with pytest.raises(ValidationError):
        EulerPropagator(dt=0).fit(dw_rates)
    with pytest.raises(ValidationError):
        EulerPropagator(n_steps=1.5).fit(dw_rates)


def test_schrod_fit_builds_map_once(dw_rates, rng):
    est = SchrodPropagator(dt=0.1, n_steps=3, eta_max=2, d_eta=0.05).fit(dw_rates)
    M = est.propagator_
    est.transform(batch(21, rng))
    assert est.propagator_ is M and M.shape == (21, 21)
