"""Discrete-time LTI plants, LQR gain synthesis, and the canonical cart-pole instance.

The closed loop is switched: on a delivery slot the controller acts on the
received estimate, otherwise on the locally predicted state. Both branches
share one feedback gain synthesized from the discrete algebraic Riccati
equation (DARE).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RiccatiError",
    "LqrWeights",
    "PlantModel",
    "PlantState",
    "spectral_radius",
    "solve_dare",
    "lqr_gain",
    "make_model",
    "step",
    "draw_plant_noise",
    "control_input",
    "make_pendulum",
    "PENDULUM_A",
    "PENDULUM_B",
]

# Discretized cart-pole (state: cart position, cart velocity, pole angle,
# pole angular velocity; input: horizontal force).
PENDULUM_A = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 2.055, -0.722, 4.828],
        [0.0, 0.023, 0.91, 0.037],
        [0.0, 0.677, -0.453, 2.055],
    ]
)
PENDULUM_B = np.array([[0.034], [0.168], [0.019], [0.105]])


class RiccatiError(RuntimeError):
    """DARE value iteration failed to converge."""


def spectral_radius(m: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def _check_psd(m: np.ndarray, name: str, tol: float = 1e-9) -> None:
    if not np.allclose(m, m.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(m)) < -tol:
        raise ValueError(f"{name} must be positive semidefinite")


@dataclass(frozen=True, eq=False)
class LqrWeights:
    """Quadratic cost weights: ``q`` on the state (PSD), ``r`` on the input (PD)."""

    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.atleast_2d(np.asarray(self.q, dtype=float)))
        object.__setattr__(self, "r", np.atleast_2d(np.asarray(self.r, dtype=float)))
        _check_psd(self.q, "q")
        _check_psd(self.r, "r")
        if np.min(np.linalg.eigvalsh(self.r)) <= 0:
            raise ValueError("r must be positive definite")


def solve_dare(
    a: np.ndarray,
    b: np.ndarray,
    q: np.ndarray,
    r: np.ndarray,
    max_iters: int = 10_000,
    rel_tol: float = 1e-10,
) -> np.ndarray:
    """Fixed point of the DARE by value iteration from ``P0 = q``.

    Returns the stabilizing solution ``P``. Raises :class:`RiccatiError` if the
    iteration does not reach ``rel_tol`` (Frobenius, relative) within
    ``max_iters`` sweeps, e.g. for an unstabilizable pair.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = np.asarray(q, dtype=float)
    for _ in range(max_iters):
        btpb = b.T @ p @ b
        gain = np.linalg.solve(r + btpb, b.T @ p @ a)
        p_next = a.T @ p @ a - a.T @ p @ b @ gain + q
        p_next = 0.5 * (p_next + p_next.T)
        if not np.all(np.isfinite(p_next)):
            raise RiccatiError("value iteration diverged (pair not stabilizable?)")
        if np.linalg.norm(p_next - p, "fro") <= rel_tol * np.linalg.norm(p_next, "fro"):
            return p_next
        p = p_next
    raise RiccatiError(f"no convergence within {max_iters} iterations")


def lqr_gain(
    a: np.ndarray,
    b: np.ndarray,
    weights: LqrWeights,
    max_iters: int = 10_000,
    rel_tol: float = 1e-10,
) -> np.ndarray:
    """Feedback gain ``phi`` such that ``u = -phi @ x`` stabilizes ``(a, b)``.

    The gain is read off the converged DARE solution; the closed loop
    ``a - b @ phi`` is verified to have spectral radius below one.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = solve_dare(a, b, weights.q, weights.r, max_iters=max_iters, rel_tol=rel_tol)
    phi = np.linalg.solve(weights.r + b.T @ p @ b, b.T @ p @ a)
    rho = spectral_radius(a - b @ phi)
    if rho >= 1.0:
        raise RiccatiError(f"synthesized loop is not stable (spectral radius {rho:.6f})")
    return phi


@dataclass(frozen=True, eq=False)
class PlantModel:
    """One LTI control loop: dynamics ``a``, input map ``b``, noise covariance
    ``w`` and feedback gain ``phi`` (``u = -phi @ x_estimate``)."""

    a: np.ndarray
    b: np.ndarray
    w: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        for name in ("a", "b", "w", "phi"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        d, p = self.b.shape
        if self.a.shape != (d, d):
            raise ValueError(f"a must be {d}x{d}, got {self.a.shape}")
        if self.w.shape != (d, d):
            raise ValueError(f"w must be {d}x{d}, got {self.w.shape}")
        if self.phi.shape != (p, d):
            raise ValueError(f"phi must be {p}x{d}, got {self.phi.shape}")
        _check_psd(self.w, "w")
        rho = spectral_radius(self.closed_loop())
        if rho >= 1.0:
            raise ValueError(f"closed loop unstable: spectral radius {rho:.6f}")

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @property
    def input_dim(self) -> int:
        return self.b.shape[1]

    def closed_loop(self) -> np.ndarray:
        return self.a - self.b @ self.phi

    def closed_loop_norm(self) -> float:
        # Induced 2-norm, reported for diagnostics only: it may exceed one
        # even though the spectral radius is below one.
        return float(np.linalg.norm(self.closed_loop(), 2))


@dataclass(frozen=True, eq=False)
class PlantState:
    """State vector ``x`` at slot ``k``."""

    x: np.ndarray
    k: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))
        if not np.all(np.isfinite(self.x)):
            raise ValueError("state must be finite")
        if self.k < 0:
            raise ValueError("slot index must be non-negative")


def make_model(a: np.ndarray, b: np.ndarray, w: np.ndarray, weights: LqrWeights) -> PlantModel:
    """Build a model, synthesizing the feedback gain from ``weights``."""
    phi = lqr_gain(a, b, weights)
    return PlantModel(a=a, b=b, w=w, phi=phi)


def step(model: PlantModel, state: PlantState, u: np.ndarray, w: np.ndarray) -> PlantState:
    """One plant transition: ``x' = a x + b u + w``."""
    u = np.asarray(u, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if u.shape != (model.input_dim,):
        raise ValueError(f"u must have length {model.input_dim}, got {u.shape}")
    if w.shape != (model.dim,) or state.x.shape != (model.dim,):
        raise ValueError("state/noise dimension mismatch")
    x_next = model.a @ state.x + model.b @ u + w
    return PlantState(x=x_next, k=state.k + 1)


def draw_plant_noise(rng: np.random.Generator, w_cov: np.ndarray) -> np.ndarray:
    """Zero-mean Gaussian sample with covariance ``w_cov``.

    Uses a symmetric eigenfactorization so singular covariances are fine:
    directions with zero variance come out exactly zero.
    """
    w_cov = np.atleast_2d(np.asarray(w_cov, dtype=float))
    _check_psd(w_cov, "w_cov")
    evals, evecs = np.linalg.eigh(w_cov)
    factor = evecs * np.sqrt(np.clip(evals, 0.0, None))
    return factor @ rng.standard_normal(w_cov.shape[0])


def control_input(model: PlantModel, xi: int, x_bar: np.ndarray, x_hat: np.ndarray) -> np.ndarray:
    """Feedback input: acts on the received estimate when ``xi`` is 1, on the
    local prediction otherwise."""
    selected = np.asarray(x_bar if xi else x_hat, dtype=float).reshape(-1)
    return -(model.phi @ selected)


def make_pendulum(sigma_w2: float = 0.01, weights: LqrWeights | None = None) -> PlantModel:
    """Canonical cart-pole loop: the matrices above, ``w = sigma_w2 * I`` and an
    LQR gain with unit state cost and input cost 0.1."""
    if weights is None:
        weights = LqrWeights(q=np.eye(4), r=np.array([[0.1]]))
    return make_model(PENDULUM_A, PENDULUM_B, sigma_w2 * np.eye(4), weights)
