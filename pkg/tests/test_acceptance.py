"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Criteria 1-5 are oracle-equivalence and exactness gates; 6-8 run a scaled
comparative experiment (10 loops, 3000 slots, 10 runs, default constants)
shared across tests via a module-scoped fixture.
"""

import dataclasses
import time

import numpy as np
import pytest

from aoi_copilot.gpr import GprDatabase, GprHyperparams, predict, predict_dense, push, se_kernel
from aoi_copilot.plant import (
    PENDULUM_A,
    PENDULUM_B,
    PlantState,
    control_input,
    make_pendulum,
    spectral_radius,
    step,
)
from aoi_copilot.scheduler import GAMMA_MAX, LyapunovParams, aux_beta_opt, aux_power_opt, power_opt
from aoi_copilot.sim import SimConfig, run_experiment, run_once
from aoi_copilot.wireless import ChannelDraw, mmse_estimate, snr

EXPERIMENT = SimConfig(systems=10, steps=3000, runs=10)


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"criterion {criterion} [{'PASS' if ok else 'FAIL'}]: {detail}")


# ---------------------------------------------------------------------------
# independent oracles


def gp_joint_conditioning_oracle(db: GprDatabase, k_test: int, hp: GprHyperparams):
    """Condition the explicit joint Gaussian of (training outputs, test output).

    Built directly from kernel evaluations; shares no code with the production
    path beyond the kernel definition itself.
    """
    n, d = len(db), db.dim
    t = np.asarray(db.times, dtype=float)
    eye = np.eye(d)
    c11 = np.kron(se_kernel(t[:, None], t[None, :], hp), eye) + hp.jitter * np.eye(n * d)
    c21 = np.kron(se_kernel(float(k_test), t, hp)[None, :], eye)
    c22 = se_kernel(k_test, k_test, hp) * eye
    f = np.concatenate(db.values)
    solve = np.linalg.solve(c11, np.column_stack([c21.T, f]))
    mean = c21 @ solve[:, -1]
    cov = c22 - c21 @ solve[:, :-1]
    return mean, 0.5 * (cov + cov.T)


def mmse_conditioning_oracle(y, power, channel, sigma_x):
    d = sigma_x.shape[0]
    h = channel.matrix
    c_xy = np.sqrt(power) * sigma_x @ h.T
    c_yy = power * h @ sigma_x @ h.T + channel.n0 * np.eye(d)
    gain = np.linalg.solve(c_yy, c_xy.T).T
    return gain @ y, sigma_x - gain @ c_xy.T


# ---------------------------------------------------------------------------
# criteria 1-5


def test_criterion_1_gpr_oracle_equivalence():
    rng = np.random.default_rng(101)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        dim = int(rng.integers(1, 5))
        n = int(rng.integers(0, 7))
        scale = float(rng.uniform(0.5, 2.0))
        hp = GprHyperparams(
            output_scale=scale,
            length_scale=float(rng.uniform(1.0, 25.0)),
            # regularizer drawn with the instance; keeps the Gram conditioning
            # in a range where 1e-9 absolute agreement is meaningful
            jitter=scale**2 * 10.0 ** rng.uniform(-4.0, -2.0),
        )
        db = GprDatabase(dim, 64)
        t = 0
        for _ in range(n):
            db = push(db, t, rng.normal(size=dim))
            t += int(rng.integers(1, 5))
        k_test = t + int(rng.integers(0, 10))
        fast = predict(db, k_test, hp)
        dense = predict_dense(db, k_test, hp)
        assert np.allclose(fast.x_hat, dense.x_hat, rtol=0.0, atol=1e-9)
        assert np.allclose(fast.k_star, dense.k_star, rtol=0.0, atol=1e-9)
        if n > 0:
            mean, cov = gp_joint_conditioning_oracle(db, k_test, hp)
            worst = max(
                worst,
                float(np.max(np.abs(fast.x_hat - mean))),
                float(np.max(np.abs(fast.k_star - cov))),
            )
            assert np.allclose(fast.x_hat, mean, rtol=0.0, atol=1e-9)
            assert np.allclose(fast.k_star, cov, rtol=0.0, atol=1e-9)
        assert np.min(np.linalg.eigvalsh(fast.k_star)) >= -1e-9
        assert np.min(np.linalg.eigvalsh(dense.k_star)) >= -1e-9
    elapsed = time.perf_counter() - started
    ok = elapsed < 10.0
    report(1, ok, f"200 instances, worst oracle gap {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_mmse_oracle_equivalence():
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(1, 5))
        root = rng.normal(size=(d, d))
        sigma_x = root @ root.T + 0.1 * np.eye(d)
        channel = ChannelDraw(gains=rng.rayleigh(scale=1.0, size=d), n0=float(rng.uniform(0.1, 2.0)))
        power = float(rng.uniform(0.0, 10.0))
        y = rng.normal(size=d)
        result = mmse_estimate(y, power, channel, sigma_x)
        mean, cov = mmse_conditioning_oracle(y, power, channel, sigma_x)
        worst = max(worst, float(np.max(np.abs(result.v - cov))), float(np.max(np.abs(result.x_bar - mean))))
        assert np.allclose(result.x_bar, mean, rtol=0.0, atol=1e-8)
        assert np.allclose(result.v, cov, rtol=0.0, atol=1e-8)
        assert np.min(np.linalg.eigvalsh(sigma_x - result.v)) >= -1e-9
    report(2, True, f"200 instances, worst oracle gap {worst:.2e}")


def test_criterion_3_pendulum_control():
    model = make_pendulum(sigma_w2=0.0)
    expected_a = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 2.055, -0.722, 4.828],
            [0.0, 0.023, 0.91, 0.037],
            [0.0, 0.677, -0.453, 2.055],
        ]
    )
    expected_b = np.array([[0.034], [0.168], [0.019], [0.105]])
    assert np.array_equal(model.a, expected_a)
    assert np.array_equal(model.b, expected_b)
    assert np.array_equal(PENDULUM_A, expected_a) and np.array_equal(PENDULUM_B, expected_b)

    rho_open = spectral_radius(model.a)
    rho_closed = spectral_radius(model.closed_loop())
    assert rho_open > 1.0
    assert rho_closed < 1.0

    state = PlantState(np.array([0.0, 0.0, 0.1, 0.0]))
    x0_norm = np.linalg.norm(state.x)
    for _ in range(100):
        state = step(model, state, control_input(model, 1, state.x, state.x), np.zeros(4))
    decay = np.linalg.norm(state.x) / x0_norm
    ok = decay < 1e-3
    report(3, ok, f"matrices exact, rho_open={rho_open:.3f}, rho_closed={rho_closed:.3f}, decay={decay:.2e}")
    assert ok


def test_criterion_4_closed_form_optimality():
    rng = np.random.default_rng(404)
    params = LyapunovParams(v_weight=100.0)
    p_max = 800.0
    checked_interior = 0
    for _ in range(10_000):
        q = float(rng.uniform(0.0, 300.0))
        gamma_b = aux_beta_opt(q, params)
        if q == 0.0:
            assert gamma_b == GAMMA_MAX
        else:
            assert gamma_b >= 1.0
            if gamma_b > 1.0:  # interior: derivative of v*log(1+g) - q*g vanishes
                assert abs(params.v_weight * params.omega_beta / (1.0 + gamma_b) - q) <= 1e-9 * (1.0 + q)
                checked_interior += 1
        gamma_p = aux_power_opt(q, params, p_max)
        assert 0.0 <= gamma_p <= p_max
        if q > 0.0 and 0.0 < gamma_p < p_max:
            assert abs(params.v_weight * params.omega_power / (1.0 + gamma_p) - q) <= 1e-9 * (1.0 + q)

        channel = ChannelDraw(gains=rng.rayleigh(scale=1.0 / np.sqrt(2.0), size=4), n0=1.0)
        p_star = power_opt(channel, snr_th=8.0, q_power=q, p_max=p_max)
        assert 0.0 < p_star <= p_max
        if p_star < p_max:  # channel inversion: threshold met with (near) equality
            achieved = snr(p_star, channel)
            assert achieved >= 8.0
            assert achieved <= 8.0 * (1.0 + 1e-8)
    report(4, True, f"10000 queue states, {checked_interior} interior stationarity checks")


def test_criterion_5_recursion_exactness():
    config = SimConfig(systems=3, steps=500, runs=1)
    trace, _ = run_once(config, 0)
    shape = (500, 3)
    cols = {
        name: getattr(trace, name).reshape(shape)
        for name in ("beta", "xi", "alpha", "power", "m_bar", "q_beta", "q_power", "q_stab", "gamma_beta", "gamma_power")
    }
    for i in range(3):
        beta, q_beta, q_power, q_stab = 1, 0.0, 0.0, 0.0
        for k in range(500):
            assert cols["beta"][k, i] == beta
            assert cols["q_beta"][k, i] == q_beta
            assert cols["q_power"][k, i] == q_power
            assert cols["q_stab"][k, i] == q_stab
            q_beta = max(q_beta - cols["gamma_beta"][k, i], 0.0) + beta
            q_power = max(q_power - cols["gamma_power"][k, i], 0.0) + cols["power"][k, i]
            q_stab = max(q_stab - max(cols["m_bar"][k, i], 0.0), 0.0) + cols["alpha"][k, i]
            beta = 1 + (1 - cols["xi"][k, i]) * beta
    report(5, True, "AoI and queue recursions replay bit-exactly over 500 slots x 3 systems")


# ---------------------------------------------------------------------------
# criteria 6-8: scaled comparative experiment


@pytest.fixture(scope="module")
def comparative_experiment():
    started = time.perf_counter()
    proposed = run_experiment(EXPERIMENT, workers=2)
    baseline = run_experiment(
        dataclasses.replace(EXPERIMENT, scheduler="round_robin", predictor=False), workers=2
    )
    return proposed, baseline, time.perf_counter() - started


def test_criterion_6_comparative_control_error(comparative_experiment):
    proposed, baseline, elapsed = comparative_experiment
    fleet_proposed = proposed.aggregate()["fleet_mean_abs_angle"]["mean"]
    fleet_baseline = baseline.aggregate()["fleet_mean_abs_angle"]["mean"]
    ratio = fleet_baseline / fleet_proposed
    ok = ratio >= 5.0 and elapsed < 300.0
    report(
        6,
        ok,
        f"baseline/proposed angle ratio {ratio:.2f} (floor 5.0), "
        f"experiment wall time {elapsed:.0f}s (limit 300s), "
        f"diverged runs {proposed.diverged_runs}/{EXPERIMENT.runs} proposed, "
        f"{baseline.diverged_runs}/{EXPERIMENT.runs} baseline",
    )
    assert elapsed < 300.0
    assert ratio >= 5.0, (
        f"fleet |angle| ratio {ratio:.2f} is below the 5.0 floor: with the canonical "
        f"plant's open-loop spectral radius of 3.85 per slot and one grant per slot "
        f"across 10 loops, every scheduler's fleet diverges to the state cap, leaving "
        f"both schemes with cap-scale mean angles"
    )


def test_criterion_7_aoi_and_error_trace_behavior(comparative_experiment):
    proposed, baseline, _ = comparative_experiment
    peaks_proposed = [m.peak_aoi_post_warmup for m in proposed.per_run]
    peaks_baseline = [m.peak_aoi_post_warmup for m in baseline.per_run]
    paired = all(p >= b for p, b in zip(peaks_proposed, peaks_baseline))
    fractions = [m.pred_error_dominant_fraction_post_warmup for m in proposed.per_run]
    mean_fraction = float(np.mean(fractions))
    ok = paired and mean_fraction >= 0.60
    report(
        7,
        ok,
        f"post-warm-up peak AoI proposed {peaks_proposed} vs baseline {peaks_baseline} (paired >=), "
        f"pred-error-dominant fraction {mean_fraction:.3f} (floor 0.60)",
    )
    assert paired
    assert mean_fraction >= 0.60


def test_criterion_8_stability_telemetry(comparative_experiment):
    proposed, _, _ = comparative_experiment
    worst_margin = np.inf
    for metrics in proposed.per_run:
        margin = metrics.per_system_mean_stability_ratio + 0.05 - metrics.per_system_delivery_rate
        worst_margin = min(worst_margin, float(margin.min()))
    ok = worst_margin >= 0.0
    report(8, ok, f"per-system delivery rate <= mean clipped stability ratio + 0.05, margin {worst_margin:.3f}")
    assert ok
