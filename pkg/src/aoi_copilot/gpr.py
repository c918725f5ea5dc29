"""Multi-output Gaussian process regression over slot time.

A sliding window of (slot, received estimate) pairs feeds a squared-exponential
GP used to predict the current state of an unscheduled loop. With the output
dimensions taken as independent, the vector-valued posterior factorizes into
scalar GPs sharing one time Gram matrix; the explicit block form is kept as
``predict_dense`` so the fast path can be checked against it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GprHyperparams",
    "GprDatabase",
    "GprPrediction",
    "se_kernel",
    "push",
    "predict",
    "predict_dense",
]


@dataclass(frozen=True)
class GprHyperparams:
    """SE-kernel scales: ``output_scale`` in state units, ``length_scale`` in
    slots, plus a small diagonal ``jitter`` for the Gram solve (defaults to
    ``1e-6 * output_scale**2``)."""

    output_scale: float = 1.0
    length_scale: float = 7.0
    jitter: float | None = None

    def __post_init__(self):
        if self.output_scale <= 0 or self.length_scale <= 0:
            raise ValueError("output_scale and length_scale must be positive")
        if self.jitter is None:
            object.__setattr__(self, "jitter", 1e-6 * self.output_scale**2)
        elif self.jitter < 0:
            raise ValueError("jitter must be non-negative")


def se_kernel(t1, t2, hp: GprHyperparams):
    """Squared-exponential kernel ``h^2 exp(-((t1 - t2) / lambda)^2)``."""
    d = (np.asarray(t1, dtype=float) - np.asarray(t2, dtype=float)) / hp.length_scale
    return hp.output_scale**2 * np.exp(-(d**2))


class GprDatabase:
    """Time-ordered window of received estimates; at most ``w_max`` entries.

    Instances are immutable: :func:`push` returns a new database. The Cholesky
    factor of the Gram matrix is cached per instance since the stored times
    never change after construction.
    """

    __slots__ = ("times", "values", "w_max", "dim", "_chol", "_chol_key")

    def __init__(self, dim: int, w_max: int = 64, times: tuple = (), values: tuple = ()):
        if w_max < 1:
            raise ValueError("w_max must be at least 1")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        if len(times) != len(values):
            raise ValueError("times and values must have equal length")
        self.times = tuple(int(t) for t in times)
        self.values = tuple(np.asarray(v, dtype=float).reshape(-1) for v in values)
        if any(v.shape != (dim,) for v in self.values):
            raise ValueError(f"values must have length {dim}")
        self.w_max = int(w_max)
        self.dim = int(dim)
        self._chol = None
        self._chol_key = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def last_time(self) -> int | None:
        return self.times[-1] if self.times else None

    def gram_cholesky(self, hp: GprHyperparams) -> np.ndarray:
        key = (hp.output_scale, hp.length_scale, hp.jitter)
        if self._chol is None or self._chol_key != key:
            t = np.asarray(self.times, dtype=float)
            gram = se_kernel(t[:, None], t[None, :], hp) + hp.jitter * np.eye(len(t))
            self._chol = np.linalg.cholesky(gram)
            self._chol_key = key
        return self._chol


def push(db: GprDatabase, t: int, value: np.ndarray) -> GprDatabase:
    """Append an entry, evicting the oldest once the window is full."""
    if db.last_time is not None and t <= db.last_time:
        raise ValueError(f"time {t} not after last stored time {db.last_time}")
    times = db.times + (int(t),)
    values = db.values + (np.asarray(value, dtype=float).reshape(-1),)
    if len(times) > db.w_max:
        times, values = times[1:], values[1:]
    return GprDatabase(db.dim, db.w_max, times, values)


@dataclass(frozen=True, eq=False)
class GprPrediction:
    """Posterior mean ``x_hat`` and covariance ``k_star = kappa * I``.

    ``kappa_raw`` is the scalar posterior variance before clamping at zero,
    kept so roundoff can be monitored.
    """

    x_hat: np.ndarray
    k_star: np.ndarray
    tr_k: float
    kappa: float
    kappa_raw: float


def _prior(db: GprDatabase, hp: GprHyperparams) -> GprPrediction:
    kappa = hp.output_scale**2
    return GprPrediction(
        x_hat=np.zeros(db.dim),
        k_star=kappa * np.eye(db.dim),
        tr_k=db.dim * kappa,
        kappa=kappa,
        kappa_raw=kappa,
    )


def predict(db: GprDatabase, k_test: int, hp: GprHyperparams) -> GprPrediction:
    """GP posterior at slot ``k_test`` (zero-mean prior when the window is empty).

    The output dimensions share the time Gram matrix, so one Cholesky factor
    serves both the mean (all columns at once) and the variance.
    """
    n = len(db)
    if n == 0:
        return _prior(db, hp)
    chol = db.gram_cholesky(hp)
    k_vec = se_kernel(np.asarray(db.times, dtype=float), float(k_test), hp)
    rhs = np.column_stack([k_vec, np.vstack(db.values)])
    half = np.linalg.solve(chol, rhs)
    solved = np.linalg.solve(chol.T, half)
    x_hat = k_vec @ solved[:, 1:]
    kappa_raw = float(se_kernel(k_test, k_test, hp) - k_vec @ solved[:, 0])
    kappa = max(kappa_raw, 0.0)
    return GprPrediction(
        x_hat=x_hat,
        k_star=kappa * np.eye(db.dim),
        tr_k=db.dim * kappa,
        kappa=kappa,
        kappa_raw=kappa_raw,
    )


def predict_dense(db: GprDatabase, k_test: int, hp: GprHyperparams) -> GprPrediction:
    """Same posterior via the explicit block Gram matrix (separable kernel with
    an identity output-correlation block). Quadratic in ``n * dim``; intended
    as an oracle for :func:`predict`."""
    n, d = len(db), db.dim
    if n == 0:
        return _prior(db, hp)
    t = np.asarray(db.times, dtype=float)
    eye_d = np.eye(d)
    gram = np.kron(se_kernel(t[:, None], t[None, :], hp), eye_d) + hp.jitter * np.eye(n * d)
    k_cross = np.kron(se_kernel(float(k_test), t, hp)[None, :], eye_d)  # d x (n d)
    f = np.concatenate(db.values)
    solved = np.linalg.solve(gram, np.column_stack([k_cross.T, f]))
    x_hat = k_cross @ solved[:, -1]
    k_star = se_kernel(k_test, k_test, hp) * eye_d - k_cross @ solved[:, :-1]
    k_star = 0.5 * (k_star + k_star.T)
    kappa_raw = float(np.trace(k_star) / d)
    kappa = max(kappa_raw, 0.0)
    return GprPrediction(
        x_hat=x_hat,
        k_star=k_star,
        tr_k=float(np.trace(k_star)),
        kappa=kappa,
        kappa_raw=kappa_raw,
    )
