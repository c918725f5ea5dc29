"""AoI bookkeeping, virtual queues, and per-slot scheduling decisions.

Three virtual queues per loop turn the time-average constraints (AoI cost,
power cost, scheduling-rate-vs-stability) into queue-stability requirements;
each slot the drift-plus-penalty bound is minimized greedily through the
closed forms below, and a round-robin baseline is provided for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wireless import ChannelDraw

__all__ = [
    "LyapunovParams",
    "VirtualQueues",
    "StabilityTracker",
    "aoi_update",
    "stability_ratio",
    "aux_beta_opt",
    "aux_power_opt",
    "power_opt",
    "priority_scores",
    "schedule",
    "queue_update_beta",
    "queue_update_power",
    "queue_update_stab",
    "per_slot_objective",
    "round_robin",
]

# Stand-ins for the degenerate zero-queue closed forms, whose unconstrained
# stationary points diverge as the queue empties.
GAMMA_MAX = 1e6
STABILITY_RATIO_CAP = 1e6


@dataclass(frozen=True)
class LyapunovParams:
    """Drift-vs-penalty weight ``v_weight`` and the two cost weights."""

    v_weight: float = 100.0
    omega_beta: float = 1.0
    omega_power: float = 1.0

    def __post_init__(self):
        if self.v_weight < 0:
            raise ValueError("v_weight must be non-negative")
        if self.omega_beta <= 0 or self.omega_power <= 0:
            raise ValueError("cost weights must be positive")


@dataclass(eq=False)
class VirtualQueues:
    """Per-loop backlogs: AoI (``q_beta``), spent power (``q_power``) and
    scheduling-rate-vs-stability (``q_stab``). All start empty."""

    q_beta: np.ndarray
    q_power: np.ndarray
    q_stab: np.ndarray

    @classmethod
    def zeros(cls, m: int) -> "VirtualQueues":
        return cls(q_beta=np.zeros(m), q_power=np.zeros(m), q_stab=np.zeros(m))


class StabilityTracker:
    """Running arithmetic mean, from slot zero, of the clipped stability ratio."""

    __slots__ = ("m_bar", "count")

    def __init__(self, m: int):
        self.m_bar = np.zeros(m)
        self.count = 0

    def update(self, ratios: np.ndarray) -> np.ndarray:
        clipped = np.maximum(np.asarray(ratios, dtype=float), 0.0)
        self.m_bar = (self.m_bar * self.count + clipped) / (self.count + 1)
        self.count += 1
        return self.m_bar


def aoi_update(beta: int, xi: int) -> int:
    """Age recursion: reset to one on delivery, otherwise grow by one slot."""
    return 1 + (1 - xi) * beta


def stability_ratio(tr_k: float, tr_v: float, eps: float = 1e-9, cap: float = STABILITY_RATIO_CAP) -> float:
    """Service-rate bound ``tr_k / (tr_k - tr_v)``.

    When the predictor error only marginally exceeds the estimator error the
    ratio blows up; it is capped at ``cap``. A predictor no worse than the
    estimator yields zero (the consumer clips at zero anyway).
    """
    denom = tr_k - tr_v
    if denom > eps:
        return min(tr_k / denom, cap)
    if denom >= 0.0:
        return cap
    return 0.0


def aux_beta_opt(q_beta: float, params: LyapunovParams, gamma_max: float = GAMMA_MAX) -> float:
    """Auxiliary AoI variable: stationary point of
    ``v w_b log(1 + g) - q g`` clamped to its lower bound of one."""
    if q_beta < 0:
        raise ValueError("q_beta must be non-negative")
    if q_beta == 0.0:
        return gamma_max
    return max((params.v_weight * params.omega_beta - q_beta) / q_beta, 1.0)


def aux_power_opt(q_power: float, params: LyapunovParams, p_max: float) -> float:
    """Auxiliary power variable: same stationary point clamped into ``[0, p_max]``."""
    if q_power < 0:
        raise ValueError("q_power must be non-negative")
    if q_power == 0.0:
        return p_max
    return min(max((params.v_weight * params.omega_power - q_power) / q_power, 0.0), p_max)


def power_opt(channel: ChannelDraw, snr_th: float, q_power: float, p_max: float) -> float:
    """Channel-inverting transmit power hitting the SNR threshold, capped at ``p_max``.

    A hair of relative margin is added so the threshold comparison survives
    floating-point rounding of the inversion. The power queue is nonnegative
    by construction, so no other branch exists; a dead channel gets ``p_max``
    (the SNR gate will reject the slot regardless).
    """
    del q_power  # nonnegative by construction; kept for signature parity
    h2 = channel.gain_power()
    if h2 <= 0.0:
        return p_max
    return min(snr_th * channel.n0 / h2 * (1.0 + 1e-9), p_max)


def priority_scores(queues: VirtualQueues, betas: np.ndarray, p_stars: np.ndarray) -> np.ndarray:
    """Per-loop gain of granting the slot: the coefficient of the scheduling
    indicator in the per-slot drift-plus-penalty bound."""
    return queues.q_beta * np.asarray(betas) - queues.q_power * np.asarray(p_stars) - queues.q_stab


def schedule(
    queues: VirtualQueues,
    betas: np.ndarray,
    m_bars: np.ndarray,
    p_stars: np.ndarray,
    warmup: bool = False,
) -> np.ndarray:
    """Grant at most one loop the slot.

    Loops are walked in order of decreasing priority score (ties to the lower
    index); the first with positive score whose average stability ratio admits
    a full grant wins. During warm-up the stability gate is bypassed so loops
    whose predictors have no data yet can be bootstrapped.
    """
    scores = priority_scores(queues, betas, p_stars)
    m = len(scores)
    alpha = np.zeros(m, dtype=bool)
    order = sorted(range(m), key=lambda i: (-scores[i], i))
    for i in order:
        if scores[i] > 0.0 and max(m_bars[i], 0.0) >= 1.0:
            alpha[i] = True
            return alpha
    if warmup:
        for i in order:
            if scores[i] > 0.0:
                alpha[i] = True
                return alpha
    return alpha


def queue_update_beta(q: float, gamma: float, beta: float) -> float:
    return max(q - gamma, 0.0) + beta


def queue_update_power(q: float, gamma: float, p_hat: float) -> float:
    return max(q - gamma, 0.0) + p_hat


def queue_update_stab(q: float, m_bar: float, alpha: float) -> float:
    return max(q - max(m_bar, 0.0), 0.0) + alpha


def per_slot_objective(
    queues: VirtualQueues,
    params: LyapunovParams,
    gamma_beta: np.ndarray,
    gamma_power: np.ndarray,
    beta_next: np.ndarray,
    p_hat: np.ndarray,
    m_bars: np.ndarray,
    alpha: np.ndarray,
) -> float:
    """Drift-plus-penalty bound terms for one slot (diagnostic only).

    Evaluates what the greedy minimization trades off; the additive constant of
    the bound is omitted since decisions never depend on it.
    """
    v = params.v_weight
    gb = np.asarray(gamma_beta, dtype=float)
    gp = np.asarray(gamma_power, dtype=float)
    total = float(np.sum(v * params.omega_beta * np.log1p(gb) - queues.q_beta * gb))
    total += float(np.sum(v * params.omega_power * np.log1p(gp) - queues.q_power * gp))
    total += float(np.sum(queues.q_beta * np.asarray(beta_next)))
    total += float(np.sum(queues.q_power * np.asarray(p_hat)))
    total -= float(np.sum(queues.q_stab * (np.maximum(np.asarray(m_bars), 0.0) - np.asarray(alpha))))
    return total


def round_robin(k: int, m: int) -> np.ndarray:
    """Fixed rotation baseline: loop ``k mod m`` owns slot ``k``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    alpha = np.zeros(m, dtype=bool)
    alpha[k % m] = True
    return alpha
