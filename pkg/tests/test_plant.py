import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aoi_copilot.plant import (
    PENDULUM_A,
    PENDULUM_B,
    LqrWeights,
    PlantState,
    RiccatiError,
    control_input,
    draw_plant_noise,
    lqr_gain,
    make_model,
    make_pendulum,
    solve_dare,
    spectral_radius,
    step,
)


def scalar_value_iteration(a, b, q, r, iters=100_000, tol=1e-14):
    """Independent 1-D Riccati oracle: iterate the cost-to-go recursion directly."""
    p = q
    for _ in range(iters):
        p_next = q + a * p * a - (a * p * b) ** 2 / (r + b * p * b)
        if abs(p_next - p) <= tol * abs(p_next):
            return p_next
        p = p_next
    raise AssertionError("oracle did not converge")


class TestStep:
    def test_zero_fixed_point(self):
        model = make_pendulum()
        out = step(model, PlantState(np.zeros(4)), np.zeros(1), np.zeros(4))
        assert np.array_equal(out.x, np.zeros(4))
        assert out.k == 1

    @pytest.mark.parametrize(
        "basis, column",
        [(0, (1.0, 0.0, 0.0, 0.0)), (1, (0.0, 2.055, 0.023, 0.677))],
    )
    def test_pendulum_column_readoff(self, basis, column):
        model = make_pendulum()
        e = np.zeros(4)
        e[basis] = 1.0
        out = step(model, PlantState(e), np.zeros(1), np.zeros(4))
        assert np.allclose(out.x, column, atol=0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_linearity(self, seed):
        rng = np.random.default_rng(seed)
        model = make_pendulum()
        x1, x2 = rng.normal(size=4), rng.normal(size=4)
        u1, u2 = rng.normal(size=1), rng.normal(size=1)
        w1, w2 = rng.normal(size=4), rng.normal(size=4)
        lhs = step(model, PlantState(x1 + x2), u1 + u2, w1 + w2).x
        rhs = step(model, PlantState(x1), u1, w1).x + step(model, PlantState(x2), u2, w2).x
        assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        model = make_pendulum()
        with pytest.raises(ValueError):
            step(model, PlantState(np.zeros(4)), np.zeros(2), np.zeros(4))
        with pytest.raises(ValueError):
            step(model, PlantState(np.zeros(4)), np.zeros(1), np.zeros(3))


class TestPlantNoise:
    def test_zero_covariance(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            assert np.array_equal(draw_plant_noise(rng, np.zeros((4, 4))), np.zeros(4))

    def test_identity_covariance_monte_carlo(self):
        rng = np.random.default_rng(7)
        draws = np.array([draw_plant_noise(rng, np.eye(4)) for _ in range(100_000)])
        sample_cov = draws.T @ draws / draws.shape[0]
        assert np.linalg.norm(sample_cov - np.eye(4), "fro") < 0.05 * np.linalg.norm(np.eye(4), "fro")

    def test_degenerate_covariance(self):
        rng = np.random.default_rng(1)
        w = np.diag([4.0, 0.0, 0.0, 0.0])
        for _ in range(100):
            sample = draw_plant_noise(rng, w)
            assert np.array_equal(sample[1:], np.zeros(3))

    def test_non_psd_rejected(self):
        with pytest.raises(ValueError):
            draw_plant_noise(np.random.default_rng(0), np.diag([1.0, -1.0]))


class TestLqr:
    def test_scalar_cheap_input_limit(self):
        # r -> 0+ drives the gain to a/b, placing the closed loop at zero.
        a, b, q, r = 2.0, 1.0, 1.0, 1e-9
        phi = lqr_gain(np.array([[a]]), np.array([[b]]), LqrWeights(q=[[q]], r=[[r]]))
        p_oracle = scalar_value_iteration(a, b, q, r)
        phi_oracle = b * p_oracle * a / (r + b * p_oracle * b)
        assert phi[0, 0] == pytest.approx(phi_oracle, rel=1e-8)
        assert phi[0, 0] == pytest.approx(2.0, abs=1e-4)
        assert abs(a - b * phi[0, 0]) < 1e-3

    def test_scalar_stable_plant_expensive_input(self):
        phi = lqr_gain(np.array([[0.5]]), np.array([[1.0]]), LqrWeights(q=[[1.0]], r=[[1e6]]))
        assert abs(phi[0, 0]) < 1e-3

    def test_pendulum_closed_loop_stable(self):
        weights = LqrWeights(q=np.eye(4), r=[[1.0]])
        phi = lqr_gain(PENDULUM_A, PENDULUM_B, weights)
        assert spectral_radius(PENDULUM_A - PENDULUM_B @ phi) < 1.0

    def test_dare_fixed_point_residual(self):
        q, r = np.eye(4), np.array([[0.1]])
        p = solve_dare(PENDULUM_A, PENDULUM_B, q, r)
        gain = np.linalg.solve(r + PENDULUM_B.T @ p @ PENDULUM_B, PENDULUM_B.T @ p @ PENDULUM_A)
        residual = p - (PENDULUM_A.T @ p @ PENDULUM_A - PENDULUM_A.T @ p @ PENDULUM_B @ gain + q)
        assert np.linalg.norm(residual, "fro") < 1e-8 * np.linalg.norm(p, "fro")

    def test_unstabilizable_pair_raises(self):
        with pytest.raises(RiccatiError):
            lqr_gain(np.array([[2.0]]), np.array([[0.0]]), LqrWeights(q=[[1.0]], r=[[1.0]]))


class TestSpectralRadius:
    def test_identity(self):
        assert spectral_radius(np.eye(4)) == pytest.approx(1.0)

    def test_diagonal(self):
        assert spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9)

    def test_pendulum_open_loop_unstable(self):
        assert spectral_radius(PENDULUM_A) > 1.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(-10, 10, allow_nan=False))
    def test_scaling(self, seed, c):
        m = np.random.default_rng(seed).normal(size=(3, 3))
        assert spectral_radius(c * m) == pytest.approx(abs(c) * spectral_radius(m), rel=1e-9, abs=1e-12)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            spectral_radius(np.zeros((2, 3)))


class TestControlInput:
    def test_zero_estimates(self):
        model = make_pendulum()
        assert np.array_equal(control_input(model, 1, np.zeros(4), np.ones(4) * 9), np.zeros(1))
        assert np.array_equal(control_input(model, 0, np.ones(4) * 9, np.zeros(4)), np.zeros(1))

    def test_scalar_selects_received_estimate(self):
        model = make_model(
            np.array([[0.5]]), np.array([[1.0]]), np.zeros((1, 1)), LqrWeights(q=[[1.0]], r=[[1.0]])
        )
        object.__setattr__(model, "phi", np.array([[2.0]]))
        u = control_input(model, 1, np.array([3.0]), np.array([99.0]))
        assert u[0] == pytest.approx(-6.0)


class TestPendulum:
    def test_matrix_entries(self):
        model = make_pendulum()
        assert model.a[1][1] == 2.055
        assert model.a[1][3] == 4.828
        assert model.b[1][0] == 0.168
        assert model.b[0][0] == 0.034

    def test_closed_loop_invariant(self):
        model = make_pendulum()
        assert spectral_radius(model.closed_loop()) < 1.0

    def test_perfect_feedback_contracts(self):
        # Noise-free loop under exact state feedback: two orders of magnitude
        # of decay within 100 slots.
        model = make_pendulum(sigma_w2=0.0)
        state = PlantState(np.array([0.0, 0.0, 0.1, 0.0]))
        x0_norm = np.linalg.norm(state.x)
        for _ in range(100):
            u = control_input(model, 1, state.x, state.x)
            state = step(model, state, u, np.zeros(4))
        assert np.linalg.norm(state.x) < 1e-3 * x0_norm

    def test_noise_covariance_default(self):
        model = make_pendulum(sigma_w2=0.04)
        assert np.array_equal(model.w, 0.04 * np.eye(4))


def test_plant_state_requires_finite():
    with pytest.raises(ValueError):
        PlantState(np.array([np.inf, 0.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        PlantState(np.zeros(4), k=-1)
