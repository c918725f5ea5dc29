"""Block-fading uplink: analog uncoded transmission, SNR gating, MMSE recovery.

Each loop's state is amplified and sent over parallel orthogonal subchannels
(one per state dimension); the controller reconstructs it with the
linear-Gaussian conditional mean under a standard-normal prior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChannelDraw",
    "RadioParams",
    "MmseResult",
    "draw_channel",
    "snr",
    "success",
    "transmit",
    "mmse_error_cov",
    "mmse_estimate",
]


@dataclass(frozen=True, eq=False)
class ChannelDraw:
    """Diagonal fading gains for one slot plus the noise level ``n0``."""

    gains: np.ndarray
    n0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gains", np.asarray(self.gains, dtype=float).reshape(-1))
        if np.any(self.gains < 0):
            raise ValueError("gains must be non-negative")
        if self.n0 <= 0:
            raise ValueError("n0 must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.gains)

    def gain_power(self) -> float:
        """Squared Frobenius norm of the gain matrix (total subchannel power)."""
        return float(np.sum(self.gains**2))


@dataclass(frozen=True, eq=False)
class RadioParams:
    """Radio constants shared by all loops.

    ``sigma_x`` is the prior state covariance assumed by the estimator; ``None``
    means identity (states treated as unit-power per dimension).
    """

    p_max: float = 800.0
    snr_th: float = 8.0
    n0: float = 1.0
    sigma_x: np.ndarray | None = None

    def __post_init__(self):
        if self.p_max <= 0 or self.snr_th <= 0 or self.n0 <= 0:
            raise ValueError("p_max, snr_th and n0 must be positive")
        if self.sigma_x is not None:
            sx = np.atleast_2d(np.asarray(self.sigma_x, dtype=float))
            if not np.allclose(sx, sx.T, atol=1e-12) or np.min(np.linalg.eigvalsh(sx)) < -1e-9:
                raise ValueError("sigma_x must be symmetric PSD")
            object.__setattr__(self, "sigma_x", sx)

    def prior_cov(self, dim: int) -> np.ndarray:
        return np.eye(dim) if self.sigma_x is None else self.sigma_x


@dataclass(frozen=True, eq=False)
class MmseResult:
    """Estimate ``x_bar`` with error covariance ``v`` and its trace ``tr_v``."""

    x_bar: np.ndarray
    v: np.ndarray
    tr_v: float


def draw_channel(rng: np.random.Generator, dim: int, n0: float = 1.0) -> ChannelDraw:
    """Independent Rayleigh gain per subchannel, normalized to unit mean power."""
    if dim < 1:
        raise ValueError("dim must be at least 1")
    # E[g^2] = 2 * scale^2, so scale = 1/sqrt(2) gives unit mean power.
    gains = rng.rayleigh(scale=1.0 / np.sqrt(2.0), size=dim)
    return ChannelDraw(gains=gains, n0=n0)


def snr(power: float, channel: ChannelDraw) -> float:
    """Received signal-to-noise ratio ``power * ||H||_F^2 / n0``."""
    if power < 0:
        raise ValueError("power must be non-negative")
    return power * channel.gain_power() / channel.n0


def success(snr_value: float, snr_th: float) -> bool:
    """Decoding succeeds iff the SNR reaches the threshold (boundary inclusive)."""
    return snr_value >= snr_th


def transmit(x: np.ndarray, power: float, channel: ChannelDraw, rng: np.random.Generator) -> np.ndarray:
    """Received signal ``y = sqrt(power) * H x + n`` with white noise of level ``n0``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if power < 0:
        raise ValueError("power must be non-negative")
    if x.shape != channel.gains.shape:
        raise ValueError("state/channel dimension mismatch")
    noise = rng.normal(0.0, np.sqrt(channel.n0), size=x.shape[0])
    return np.sqrt(power) * channel.gains * x + noise


def _innovation(power: float, channel: ChannelDraw, sigma_x: np.ndarray) -> np.ndarray:
    h = channel.matrix
    return power * h @ sigma_x @ h.T + channel.n0 * np.eye(sigma_x.shape[0])


def mmse_error_cov(power: float, channel: ChannelDraw, sigma_x: np.ndarray) -> np.ndarray:
    """Estimation-error covariance of the MMSE reconstruction.

    Depends only on power, gains, noise level and the prior, not on the
    received realization, so it can be evaluated before transmitting.
    """
    sigma_x = np.atleast_2d(np.asarray(sigma_x, dtype=float))
    h = channel.matrix
    v = sigma_x - power * sigma_x @ h.T @ np.linalg.solve(_innovation(power, channel, sigma_x), h @ sigma_x)
    return 0.5 * (v + v.T)


def mmse_estimate(y: np.ndarray, power: float, channel: ChannelDraw, sigma_x: np.ndarray) -> MmseResult:
    """Conditional mean of the transmitted state given the received signal."""
    y = np.asarray(y, dtype=float).reshape(-1)
    sigma_x = np.atleast_2d(np.asarray(sigma_x, dtype=float))
    if power < 0:
        raise ValueError("power must be non-negative")
    h = channel.matrix
    x_bar = np.sqrt(power) * sigma_x @ h.T @ np.linalg.solve(_innovation(power, channel, sigma_x), y)
    v = mmse_error_cov(power, channel, sigma_x)
    return MmseResult(x_bar=x_bar, v=v, tr_v=float(np.trace(v)))
