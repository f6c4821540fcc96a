"""Acceptance checks, one test per criterion.

Each test records a ``[PASS]``/``[FAIL]`` line that is printed in the pytest
terminal summary. Tolerances are the stated ones; nothing is relaxed.
"""

import time
import warnings

import numpy as np
import pytest

from fpqsolve import (
    DriftDiffusionModel,
    InvalidGeneratorError,
    StepSizeError,
    assemble,
    double_well_1d,
    euler_propagate,
    eval_coefficients,
    expm_propagate,
    mean,
    sde_monte_carlo,
    steady_state_1d,
    trace_distance,
    validate_generator,
    variance,
)
from fpqsolve.config import apply_overrides, config_from_dict, load_preset, load_preset_dict, load_sweep_preset
from fpqsolve.generator import finite_difference_line, taylor_rates_line
from fpqsolve.harness import build_generator, initial_distribution, sweep
from fpqsolve.quantum import (
    EmulatorState,
    FourierRegister,
    block_euler_step,
    build_block_encoding,
    build_lcu,
    lcu_step,
    max_step_size,
    propagator_check,
    run_block_euler,
    run_lcu,
    run_schrod,
    schrod_propagators,
    split_hermitian,
)
from conftest import ACCEPTANCE_LINES, random_conserving

FULL, TRUNC, COARSE = FourierRegister(10, 0.01), FourierRegister(5, 0.01), FourierRegister(10, 0.1)


def report(num, ok, detail):
    line = f"criterion {num}: [{'PASS' if ok else 'FAIL'}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def exp1():
    cfg = load_preset("exp1")
    return build_generator(cfg), initial_distribution(cfg).values, cfg.grid


def fitted_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def test_criterion_01_block_euler_equals_classical_euler(exp1):
    R, p0, _ = exp1
    t0 = time.perf_counter()
    q = run_block_euler(R, p0, 0.1, 40).trajectory
    c = euler_propagate(R, p0, 0.1, 40)
    elapsed = time.perf_counter() - t0
    gap = float(np.abs(q.states - c.states).sum(axis=1).max())
    report(1, gap <= 1e-10 and elapsed < 1.0, f"max per-snapshot L1 gap {gap:.2e} (<= 1e-10), {elapsed:.2f}s")


def test_criterion_02_steady_state_approach(exp1):
    R, p0, grid = exp1
    ps = steady_state_1d(0.5, 0.15, grid).values
    ok, parts = True, []
    for label, states in (
        ("classical", euler_propagate(R, p0, 0.1, 40).states),
        ("quantum", run_block_euler(R, p0, 0.1, 40).trajectory.states),
    ):
        d = np.abs(states - ps).sum(axis=1)
        closer = d[40] < d[10]
        monotone = bool(np.all(np.diff(d[30:]) <= 1e-6))
        ok &= closer and monotone
        parts.append(f"{label}: d10={d[10]:.4f} d40={d[40]:.4f} monotone tail={monotone}")
    report(2, ok, "; ".join(parts))


def test_criterion_03_lcu_order_and_agreement(exp1):
    R, p0, _ = exp1
    M = R.dense()
    dts = [0.1, 0.05, 0.025, 0.0125]
    errs = []
    for dt in dts:
        new, _, _ = lcu_step(build_lcu(M, dt), EmulatorState.from_prob(p0))
        errs.append(np.abs(new.real_vector() - (p0 + dt * M @ p0)).sum())
    order = fitted_slope(dts, errs)
    t0 = time.perf_counter()
    a = run_lcu(M, p0, 0.01, 100).trajectory
    b = run_block_euler(M, p0, 0.01, 100).trajectory
    elapsed = time.perf_counter() - t0
    gap = float(np.abs(a.states - b.states).sum(axis=1).max())
    report(
        3,
        order >= 1.5 and gap <= 1e-3 and elapsed < 10,
        f"single-step order {order:.2f} (>= 1.5); LCU vs block-Euler max L1 gap {gap:.3e} (<= 1e-3) "
        f"at dt=0.01 x 100 steps",
    )


def test_criterion_04_success_probability_laws(exp1):
    R, p0, _ = exp1
    M = R.dense()
    u = p0 / np.linalg.norm(p0)
    first = u @ (M + M.T) @ u
    dts = [0.02, 0.01, 0.005, 0.0025]
    resid = []
    for dt in dts:
        step = build_block_encoding(M, dt, subnormalize=True)
        _, prob = block_euler_step(step, EmulatorState.from_prob(p0))
        # the encoded block is A / alpha, so the unscaled success law is prob * alpha^2
        resid.append(abs(prob * step.subnormalization**2 - 1 - dt * first))
    ratios = np.array(resid[:-1]) / resid[1:]
    ladder = [0.01, 0.005, 0.0025, 0.00125]
    loss = [1 - lcu_step(build_lcu(M, dt), EmulatorState.from_prob(p0))[1] for dt in ladder]
    slope = fitted_slope(ladder, loss)
    ok = bool(np.all(np.abs(ratios - 4) <= 1)) and abs(slope - 0.5) <= 0.1
    report(4, ok, f"block residual halving ratios {np.round(ratios, 3).tolist()} (4 +- 1); "
                  f"LCU slope of log(1 - p_a) {slope:.3f} (0.5 +- 0.1)")


def _pure_diffusion(grid, D):
    gain = np.sqrt(D)
    model = DriftDiffusionModel(lambda x: np.zeros_like(x), lambda x: np.full_like(x, gain), 1, constant_noise=True)
    return assemble(eval_coefficients(model, grid), "rates").dense()


def test_criterion_05_step_size_bound(exp1, rng):
    R1, _, grid = exp1
    try:
        max_step_size(R1)
        exp1_note = "exp1 bound defined"
    except InvalidGeneratorError:
        exp1_note = "exp1 excluded: R + R^T is indefinite there, so no contraction bound exists"
    gens = [_pure_diffusion(grid, 0.15)]
    for _ in range(5):
        R = random_conserving(8, rng)
        R = (R + R.T) / 2
        np.fill_diagonal(R, 0.0)
        np.fill_diagonal(R, -R.sum(axis=0))
        gens.append(R)
    worst_eig, worst_prob, rejected = np.inf, 0.0, True
    for R in gens:
        n = R.shape[0]
        dt = max_step_size(R)
        A = np.eye(n) + dt * R
        worst_eig = min(worst_eig, np.linalg.eigvalsh(np.eye(n) - A.T @ A).min())
        step = build_block_encoding(R, dt, strict=True)
        for p in rng.dirichlet(np.ones(n), size=20):
            worst_prob = max(worst_prob, block_euler_step(step, EmulatorState.from_prob(p))[1])
        q = run_block_euler(R, rng.dirichlet(np.ones(n)), dt, 20, subnormalize=False)
        worst_prob = max(worst_prob, max(r["success_prob"] for r in q.trajectory.log))
        try:
            build_block_encoding(R, 1.2 * dt, strict=True)
            rejected = False
        except StepSizeError:
            pass
    ok = worst_eig >= -1e-10 and worst_prob <= 1 + 1e-10 and rejected
    report(5, ok, f"{len(gens)} generators with R + R^T <= 0: min eig(I - A^T A) {worst_eig:.2e}, "
                  f"max success {worst_prob:.12f}, 1.2x bound rejected={rejected}; {exp1_note}")


# --- Schrodingerisation on the spiral ---------------------------------------


def _spiral(D):
    cfg = config_from_dict(apply_overrides(load_preset_dict("exp2"), {"model.params.D": D}))
    return build_generator(cfg), initial_distribution(cfg), cfg.grid


@pytest.fixture(scope="module")
def spiral_runs():
    """Maps for every register used below, built once (several minutes)."""
    out = {}
    for D in (0.15, 0.2, 0.25):
        R, p0, grid = _spiral(D)
        regs = [FULL, TRUNC, COARSE] if D == 0.15 else [FULL]
        maps = schrod_propagators(split_hermitian(R), 0.1, [(r, "auto") for r in regs])
        exact = expm_propagate(R, p0.values, np.arange(41) * 0.1)
        runs = {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for reg, M in zip(regs, maps):
                runs[reg] = run_schrod(R, p0, 0.1, 40, reg.eta_max, reg.d_eta, propagator=M)
        out[D] = (R, p0, grid, exact, runs)
    return out


def mean_gaps(a, b, grid):
    return np.array([np.linalg.norm(mean(x, grid) - mean(y, grid)) for x, y in zip(a.states, b.states)])


def var_gap(a, b, grid):
    return float(max(np.abs(variance(x, grid) - variance(y, grid)).max() for x, y in zip(a.states, b.states)))


@pytest.mark.slow
def test_criterion_06_schrodingerisation_fidelity(spiral_runs):
    R, p0, grid, exact, runs = spiral_runs[0.15]
    full = mean_gaps(runs[FULL], exact, grid)
    trunc = mean_gaps(runs[TRUNC], exact, grid)
    ok = full.max() <= 0.05 and trunc[-1] > full[-1]
    report(6, ok, f"full register max mean gap {full.max():.2e} (<= 0.05); final gap truncated "
                  f"{trunc[-1]:.2e} > full {full[-1]:.2e}")


@pytest.mark.slow
def test_criterion_07_aliasing(spiral_runs):
    R, p0, grid, exact, runs = spiral_runs[0.15]
    fine = mean_gaps(runs[FULL], exact, grid)
    coarse = mean_gaps(runs[COARSE], exact, grid)
    grows = bool(np.all(np.diff(coarse[20:]) > 0))
    ok = coarse[-1] >= 10 * fine[-1] and grows
    report(7, ok, f"final gap d_eta=0.1 {coarse[-1]:.3e} vs d_eta=0.01 {fine[-1]:.3e} "
                  f"(ratio {coarse[-1] / fine[-1]:.1f} >= 10); increasing over t in [2, 4]: {grows}")


def test_criterion_08_propagator_identity():
    t, svals = 0.5, np.array([0.1, 0.3, 1.0])
    t0 = time.perf_counter()
    errs, coarse, valid, bad = [], [], [], []
    for seed in range(10):
        R = random_conserving(4, np.random.default_rng(seed))
        e = propagator_check(R, t, svals, eta_max=[25.0, 50.0], d_eta=0.002)
        coarse.append(e[0])
        errs.append(e[1])
        top = np.linalg.eigvalsh((R + R.T) / 2).max()
        valid.append(svals >= top * t)
        bad += [f"seed {seed} s={s} (err {err:.2e}, lambda_max(R_h) t = {top * t:.3f})"
                for s, err in zip(svals, e[1]) if err > 1e-3]
    elapsed = time.perf_counter() - t0
    errs, coarse, valid = np.array(errs), np.array(coarse), np.array(valid)
    ratio = coarse.max() / errs.max()
    ok = errs.max() <= 1e-3 and ratio >= 2 * 0.9 and elapsed < 30
    detail = (f"max error {errs.max():.2e} (<= 1e-3), max-error ratio eta_max 25 -> 50 {ratio:.2f} (~2), "
              f"{elapsed:.1f}s; restricted to s >= lambda_max(R_h) t: max error {errs[valid].max():.2e}, "
              f"ratio {coarse[valid].max() / errs[valid].max():.2f}")
    if bad:
        detail += "; above tolerance: " + ", ".join(bad)
    report(8, ok, detail)


def test_criterion_09_generator_structure():
    ok, parts = True, []
    for name in ("exp1", "exp2", "exp3", "exp4"):
        cfg = load_preset(name)
        rep = validate_generator(build_generator(cfg))
        d = cfg.grid.ndim
        good = (rep.max_abs_column_sum <= 1e-12 and rep.min_offdiagonal >= 0
                and rep.max_column_sparsity <= 1 + 2 * d and rep.spectral_abscissa <= 1e-8)
        ok &= good
        parts.append(f"{name}: colsum {rep.max_abs_column_sum:.1e} sparsity {rep.max_column_sparsity} "
                     f"abscissa {rep.spectral_abscissa:.1e}")
    errs = []
    for n in (21, 41, 81):
        x = np.linspace(-2, 2, n)
        dx = x[1] - x[0]
        f, D = x - 0.5 * x**3, np.full(n, 0.15)
        T, F = taylor_rates_line(f, D, dx), finite_difference_line(f, D, dx)
        inner = np.flatnonzero(np.abs(x) <= 1.6 + 1e-9)
        errs.append(max(np.abs(dx * (T[inner + 1, inner] - F[inner + 1, inner])).max(),
                        np.abs(dx * (T[inner - 1, inner] - F[inner - 1, inner])).max()))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    ok &= bool(np.all(orders > 0.8))
    parts.append(f"Taylor vs FD (dx-scaled, |x| <= 1.6) orders {np.round(orders, 2).tolist()}")
    report(9, ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_10_monte_carlo(exp1):
    R, p0, grid = exp1
    t0 = time.perf_counter()
    mc = sde_monte_carlo(double_well_1d(0.5, 0.15), grid, [0.0], 1e-3, 4000, 100_000, seed=0)
    elapsed = time.perf_counter() - t0
    d = trace_distance(mc, expm_propagate(R, p0, [4.0]).states[-1])
    report(10, d <= 0.05 and elapsed < 60, f"trace distance {d:.4f} (<= 0.05), {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_11_variance_tracking(spiral_runs):
    ok, parts = True, []
    for D in (0.15, 0.2, 0.25):
        R, p0, grid, exact, runs = spiral_runs[D]
        blk = run_block_euler(R, p0, 0.01, 400, record_every=10).trajectory
        vb = var_gap(blk, exact, grid)
        vs = var_gap(runs[FULL], exact, grid)
        ok &= vb <= 0.02 and vs <= 0.05
        parts.append(f"D={D}: block {vb:.2e} (<= 0.02), schrod {vs:.2e} (<= 0.05)")
    report(11, ok, "; ".join(parts))


def test_criterion_12_sweep_table(tmp_path):
    spec = load_sweep_preset("double_well_groups")
    spec["runs"]["classical"] = {"solver": {"name": "classical_euler", "dt": 0.1, "n_steps": 40}}
    spec["comparisons"]["AC"] = ["analytic", "classical"]
    first = sweep(spec, tmp_path / "a")
    second = sweep(spec, tmp_path / "b")
    same = (tmp_path / "a" / "double_well_groups_table.csv").read_bytes() == (tmp_path / "b" / "double_well_groups_table.csv").read_bytes()
    gap = max(abs(r["AF_final_l1"] - r["AC_final_l1"]) for r in first.rows)
    ok = same and gap <= 1e-10 and all(r["status"] == "ok" for r in first.rows + second.rows)
    table = ", ".join(f"{r['cell']}: AS {r['AS_final_l1']:.3f} AF {r['AF_final_l1']:.3f}" for r in first.rows)
    report(12, ok, f"byte-identical rerun={same}; |AF - AC| max {gap:.1e} (<= 1e-10); {table}")
