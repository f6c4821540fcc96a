import warnings

import numpy as np
import pytest
import scipy.linalg

from fpqsolve import (
    Axis,
    DriftDiffusionModel,
    Trajectory,
    assemble,
    build_grid,
    double_well_1d,
    euler_propagate,
    eval_coefficients,
    expm_propagate,
    sde_monte_carlo,
    sde_trajectory,
    steady_state_1d,
    trace_distance,
)
from fpqsolve._exceptions import MeshBoundWarning, NumericalError, ValidationError
from conftest import random_conserving


def taylor_expm(A, terms=4000):
    """Scaled Taylor series, squared back up."""
    s = max(0, int(np.ceil(np.log2(max(np.abs(A).sum(axis=0).max(), 1e-300)))) + 1)
    B = A / 2**s
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms + 1):
        term = term @ B / k
        out = out + term
        if not np.any(term):
            break
    for _ in range(s):
        out = out @ out
    return out


def test_zero_generator_is_identity():
    p0 = np.array([0.2, 0.3, 0.5])
    tr = expm_propagate(np.zeros((3, 3)), p0, [0.0, 1.0, 5.0])
    np.testing.assert_allclose(tr.states, np.tile(p0, (3, 1)), atol=1e-15)


def test_two_state_closed_form():
    a, b = 0.7, 1.9
    R = np.array([[-a, b], [a, -b]])
    times = np.linspace(0.1, 3, 7)
    tr = expm_propagate(R, np.array([1.0, 0.0]), times)
    p1 = b / (a + b) + (1 - b / (a + b)) * np.exp(-(a + b) * times)
    np.testing.assert_allclose(tr.states[:, 0], p1, atol=1e-12)
    assert np.all(tr.l1_drift < 1e-14)


def test_expm_matches_taylor_series(rng):
    for _ in range(5):
        R = random_conserving(8, rng)
        np.testing.assert_allclose(scipy.linalg.expm(0.7 * R), taylor_expm(0.7 * R), atol=1e-10, rtol=0)


def test_expm_dense_limit():
    with pytest.raises(ValidationError):
        expm_propagate(np.zeros((5000, 5000)), np.ones(5000) / 5000, [1.0])


def test_long_time_limit_approaches_steady_state():
    dists = []
    for n in (21, 41, 81):
        g = build_grid([Axis("x", -2, 2, n)])
        R = assemble(eval_coefficients(double_well_1d(0.5, 0.15), g), "rates")
        p0 = np.zeros(n)
        p0[n // 2] = 1
        pT = expm_propagate(R, p0, [20.0]).states[-1]
        dists.append(trace_distance(pT, steady_state_1d(0.5, 0.15, g)))
    assert dists[0] < 0.05
    assert dists[1] < dists[0] and dists[2] < dists[1]


def test_steady_state_fixed_point_under_refinement():
    res = []
    for n in (21, 41, 81):
        g = build_grid([Axis("x", -2, 2, n)])
        R = assemble(eval_coefficients(double_well_1d(0.5, 0.15), g), "rates")
        ps = steady_state_1d(0.5, 0.15, g)
        res.append(np.abs(expm_propagate(R, ps.values, [1.0]).states[-1] - ps.values).sum())
    assert res[1] < res[0] and res[2] < res[1]


def test_euler_zero_steps(dw_rates, delta0):
    tr = euler_propagate(dw_rates, delta0, 0.1, 0)
    np.testing.assert_array_equal(tr.states[-1], delta0)


def test_euler_one_step_second_order(dw_rates):
    x = dw_rates.grid.axes[0].points
    p0 = np.exp(-(x**2) / 0.5)
    p0 /= p0.sum()
    errs = []
    for dt in (0.02, 0.01, 0.005):
        e = euler_propagate(dw_rates, p0, dt, 1).states[-1]
        x_ = expm_propagate(dw_rates, p0, [dt]).states[-1]
        errs.append(np.abs(e - x_).sum())
    ratios = np.array(errs[:-1]) / errs[1:]
    np.testing.assert_allclose(ratios, 4.0, rtol=0.1)


def test_euler_global_first_order(dw_rates, delta0):
    T = 1.0
    exact = expm_propagate(dw_rates, delta0, [T]).states[-1]
    gaps = []
    for dt in (0.02, 0.01, 0.005):
        gaps.append(np.abs(euler_propagate(dw_rates, delta0, dt, int(round(T / dt))).states[-1] - exact).sum())
    np.testing.assert_allclose(np.array(gaps[:-1]) / gaps[1:], 2.0, rtol=0.15)


def test_euler_bimodal_after_40_steps(dw_fd, delta0):
    p = euler_propagate(dw_fd, delta0, 0.1, 40).states[-1]
    x = dw_fd.grid.axes[0].points
    left, right = x[:10][np.argmax(p[:10])], x[11:][np.argmax(p[11:])]
    assert left == pytest.approx(-1.4) and right == pytest.approx(1.4)
    assert p[10] < p.max()


def test_euler_flags_negative_probability(dw_rates, delta0):
    with pytest.raises(NumericalError, match="negative probability"):
        euler_propagate(dw_rates, delta0, 1.0, 3)


def test_euler_log_records_drift(dw_rates, delta0):
    tr = euler_propagate(dw_rates, delta0, 0.05, 10, record_every=5)
    assert len(tr.log) == 10 and len(tr) == 3
    assert max(r["l1_drift"] for r in tr.log) < 1e-13


def test_steady_state_examples():
    g = build_grid([Axis("x", -np.sqrt(2), np.sqrt(2), 3)])
    p = steady_state_1d(0.5, 0.15, g).values
    assert p[2] / p[1] == pytest.approx(np.exp(10 / 3), rel=1e-12)
    assert np.exp(10 / 3) == pytest.approx(28.03, abs=0.01)
    g = build_grid([Axis("x", -3, 3, 601)])
    p = steady_state_1d(0.5, 0.15, g).values
    np.testing.assert_allclose(p, p[::-1], rtol=1e-12)
    x = g.axes[0].points
    assert abs(abs(x[np.argmax(p)]) - 1 / np.sqrt(0.5)) <= 0.01


def test_steady_state_validation(grid2d):
    with pytest.raises(ValidationError):
        steady_state_1d(0.5, 0.15, grid2d)
    with pytest.raises(ValidationError):
        steady_state_1d(0.0, 0.15, build_grid([Axis("x", -1, 1, 5)]))


def _free(D):
    gain = np.sqrt(D)
    return DriftDiffusionModel(lambda x: np.zeros_like(x), lambda x: np.full_like(x, gain), 1, constant_noise=True)


def test_sde_no_noise_stays_put():
    g = build_grid([Axis("x", -1, 1, 21)])
    p = sde_monte_carlo(_free(0.0), g, [0.3], 0.01, 50, 1000, seed=1)
    assert p.values[g.nearest_index([0.3])] == 1.0


def test_sde_heat_kernel_variance():
    g = build_grid([Axis("x", -4, 4, 161)])
    p = sde_monte_carlo(_free(0.15), g, [0.0], 1e-2, 100, 40000, seed=3).values
    x = g.axes[0].points
    assert p @ x**2 - (p @ x) ** 2 == pytest.approx(0.3, abs=0.015)


def test_sde_deterministic():
    g = build_grid([Axis("x", -2, 2, 21)])
    m = double_well_1d(0.5, 0.15)
    a = sde_trajectory(m, g, [0.0], 1e-2, 20, 25000, seed=7, record_every=10)
    b = sde_trajectory(m, g, [0.0], 1e-2, 20, 25000, seed=7, record_every=10)
    assert a.states.tobytes() == b.states.tobytes()
    np.testing.assert_allclose(a.times, [0, 0.1, 0.2])
    c = sde_trajectory(m, g, [0.0], 1e-2, 20, 25000, seed=8, record_every=10)
    assert not np.array_equal(a.states, c.states)


def test_sde_escape_detected():
    g = build_grid([Axis("x", -0.1, 0.1, 3)])
    with pytest.raises(NumericalError, match="escaped"):
        sde_monte_carlo(_free(1.0), g, [0.0], 1.0, 2, 100, seed=0)


def test_sde_initial_distribution_sampling(grid1d):
    p0 = np.zeros(21)
    p0[[5, 15]] = 0.5
    p = sde_monte_carlo(double_well_1d(0.5, 0.15), grid1d, p0, 1e-3, 0, 10000, seed=2).values
    assert p[5] + p[15] == 1.0 and abs(p[5] - 0.5) < 0.03


def test_trajectory_validation_and_csv(tmp_path):
    with pytest.raises(ValidationError):
        Trajectory([0.0, 0.0], np.ones((2, 2)) / 2)
    tr = Trajectory([0.0, 0.5], np.array([[1.0, 0.0], [0.25, 0.75]]))
    tr.to_csv(tmp_path / "t.csv")
    text = (tmp_path / "t.csv").read_text().splitlines()
    assert text[0] == "time,p_0,p_1" and text[2] == "0.5,0.25,0.75"
