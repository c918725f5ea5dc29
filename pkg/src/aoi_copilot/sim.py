"""Per-slot orchestration of all control loops, trace capture and metrics.

Each slot proceeds through: channel draws, local predictions, candidate
estimator errors, stability-ratio tracking, the scheduling decision, the
granted transmission, control, plant stepping, then AoI and queue updates.
A run is deterministic given its configuration and run index: every
(run, system, purpose) triple owns an independent random stream.

Divergence handling: the first time any component of a plant state passes
``STATE_CAP`` the run is flagged diverged and that plant is frozen (no further
stepping), while communication, prediction and scheduling continue to the full
horizon -- all of those depend on slot times, channels and queue levels, not on
state magnitudes, so their telemetry stays meaningful. Metrics remain finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, IO, Iterator

import numpy as np

from .gpr import GprDatabase, GprHyperparams, GprPrediction, predict, push
from .plant import PlantModel, PlantState, control_input, draw_plant_noise, make_pendulum, step
from .scheduler import (
    LyapunovParams,
    StabilityTracker,
    VirtualQueues,
    aoi_update,
    aux_beta_opt,
    aux_power_opt,
    power_opt,
    round_robin,
    schedule,
    stability_ratio,
)
from .wireless import RadioParams, draw_channel, mmse_error_cov, mmse_estimate, snr, success, transmit

__all__ = [
    "STATE_CAP",
    "SCHEDULER_KINDS",
    "SimConfig",
    "TraceRecord",
    "Trace",
    "RunMetrics",
    "ExperimentResult",
    "run_once",
    "run_experiment",
]

STATE_CAP = 1e6
SCHEDULER_KINDS = ("proposed", "round_robin")

# Random-stream purposes within a (run, system) pair.
_STREAM_CHANNEL = 0
_STREAM_MEASUREMENT = 1
_STREAM_PLANT = 2


@dataclass(frozen=True)
class SimConfig:
    """Complete description of one experiment."""

    systems: int = 10
    steps: int = 12_000
    runs: int = 100
    scheduler: str = "proposed"
    predictor: bool = True
    radio: RadioParams = field(default_factory=RadioParams)
    lyapunov: LyapunovParams = field(default_factory=LyapunovParams)
    gpr: GprHyperparams = field(default_factory=GprHyperparams)
    gpr_window: int = 64
    sigma_w2: float = 0.01
    warmup_slots: int = 200
    x0: tuple[float, ...] = (0.0, 0.0, 0.1, 0.0)
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if self.systems < 1:
            raise ValueError("systems must be at least 1")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.scheduler not in SCHEDULER_KINDS:
            raise ValueError(f"scheduler must be one of {SCHEDULER_KINDS}")
        if self.sigma_w2 < 0:
            raise ValueError("sigma_w2 must be non-negative")
        if self.warmup_slots < 0:
            raise ValueError("warmup_slots must be non-negative")
        if len(self.x0) != 4:
            raise ValueError("x0 must have four components (cart-pole state)")
        if self.gpr_window < 1:
            raise ValueError("gpr_window must be at least 1")


@dataclass(frozen=True, eq=False)
class TraceRecord:
    """One (run, slot, system) row of the simulation log."""

    run: int
    slot: int
    system: int
    x: tuple[float, ...]
    abs_angle: float
    beta: int
    alpha: int
    xi: int
    power: float
    tr_k: float
    tr_v: float
    m_bar: float
    q_beta: float
    q_power: float
    q_stab: float
    gamma_beta: float
    gamma_power: float


class Trace:
    """Columnar store of trace rows for one run, ordered by slot then system."""

    _INT_COLS = ("run", "slot", "system", "beta", "alpha", "xi")
    _FLOAT_COLS = (
        "abs_angle",
        "power",
        "tr_k",
        "tr_v",
        "m_bar",
        "q_beta",
        "q_power",
        "q_stab",
        "gamma_beta",
        "gamma_power",
    )

    def __init__(self, dim: int, rows: int):
        self.dim = dim
        self.rows = rows
        self.run = np.zeros(rows, dtype=np.int64)
        self.slot = np.zeros(rows, dtype=np.int64)
        self.system = np.zeros(rows, dtype=np.int64)
        self.x = np.zeros((rows, dim))
        self.abs_angle = np.zeros(rows)
        self.beta = np.zeros(rows, dtype=np.int64)
        self.alpha = np.zeros(rows, dtype=np.int64)
        self.xi = np.zeros(rows, dtype=np.int64)
        self.power = np.zeros(rows)
        self.tr_k = np.zeros(rows)
        self.tr_v = np.zeros(rows)
        self.m_bar = np.zeros(rows)
        self.q_beta = np.zeros(rows)
        self.q_power = np.zeros(rows)
        self.q_stab = np.zeros(rows)
        self.gamma_beta = np.zeros(rows)
        self.gamma_power = np.zeros(rows)

    def header(self) -> list[str]:
        return (
            ["run", "slot", "system"]
            + [f"x{d}" for d in range(self.dim)]
            + ["abs_angle", "beta", "alpha", "xi", "power", "tr_k", "tr_v", "m_bar"]
            + ["q_beta", "q_power", "q_stab", "gamma_beta", "gamma_power"]
        )

    def iter_records(self) -> Iterator[TraceRecord]:
        for n in range(self.rows):
            yield TraceRecord(
                run=int(self.run[n]),
                slot=int(self.slot[n]),
                system=int(self.system[n]),
                x=tuple(self.x[n]),
                abs_angle=float(self.abs_angle[n]),
                beta=int(self.beta[n]),
                alpha=int(self.alpha[n]),
                xi=int(self.xi[n]),
                power=float(self.power[n]),
                tr_k=float(self.tr_k[n]),
                tr_v=float(self.tr_v[n]),
                m_bar=float(self.m_bar[n]),
                q_beta=float(self.q_beta[n]),
                q_power=float(self.q_power[n]),
                q_stab=float(self.q_stab[n]),
                gamma_beta=float(self.gamma_beta[n]),
                gamma_power=float(self.gamma_power[n]),
            )

    def write_rows(self, fh: IO[str]) -> None:
        """Append all rows as CSV (floats carry 9 significant digits)."""
        f = "%.9g"
        for n in range(self.rows):
            parts = [str(self.run[n]), str(self.slot[n]), str(self.system[n])]
            parts += [f % v for v in self.x[n]]
            parts.append(f % self.abs_angle[n])
            parts += [str(self.beta[n]), str(self.alpha[n]), str(self.xi[n])]
            parts += [
                f % v
                for v in (
                    self.power[n],
                    self.tr_k[n],
                    self.tr_v[n],
                    self.m_bar[n],
                    self.q_beta[n],
                    self.q_power[n],
                    self.q_stab[n],
                    self.gamma_beta[n],
                    self.gamma_power[n],
                )
            ]
            fh.write(",".join(parts) + "\n")

    def write_csv(self, fh: IO[str]) -> None:
        fh.write(",".join(self.header()) + "\n")
        self.write_rows(fh)


@dataclass(eq=False)
class RunMetrics:
    """Per-run summary; every field is finite even for diverged runs."""

    per_system_mean_abs_angle: np.ndarray
    fleet_mean_abs_angle: float
    per_system_peak_aoi: np.ndarray
    per_system_mean_aoi: np.ndarray
    peak_aoi: int
    peak_aoi_post_warmup: float
    per_system_peak_aoi_post_warmup: np.ndarray
    per_system_mean_power: np.ndarray
    mean_power: float
    per_system_scheduling_rate: np.ndarray
    scheduling_rate: float
    per_system_delivery_rate: np.ndarray
    per_system_mean_stability_ratio: np.ndarray
    pred_error_dominant_fraction: float
    pred_error_dominant_fraction_post_warmup: float
    diverged: bool
    diverged_slot: int | None
    per_system_diverged_slot: list[int | None]


def _rng(master_seed: int, run: int, system: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng((master_seed, run, system, purpose))


def run_once(config: SimConfig, run_index: int = 0) -> tuple[Trace, RunMetrics]:
    """Simulate one seeded run; deterministic in ``(config, run_index)``."""
    m_sys = config.systems
    model = make_pendulum(config.sigma_w2)
    dim = model.dim
    sigma_x = config.radio.prior_cov(dim)
    radio = config.radio
    lyap = config.lyapunov
    proposed = config.scheduler == "proposed"

    rng_chan = [_rng(config.master_seed, run_index, i, _STREAM_CHANNEL) for i in range(m_sys)]
    rng_meas = [_rng(config.master_seed, run_index, i, _STREAM_MEASUREMENT) for i in range(m_sys)]
    rng_plant = [_rng(config.master_seed, run_index, i, _STREAM_PLANT) for i in range(m_sys)]

    states = [PlantState(x=np.array(config.x0), k=0) for _ in range(m_sys)]
    frozen = [False] * m_sys
    frozen_slot: list[int | None] = [None] * m_sys
    betas = np.ones(m_sys, dtype=np.int64)
    queues = VirtualQueues.zeros(m_sys)
    tracker = StabilityTracker(m_sys)
    databases = [GprDatabase(dim, config.gpr_window) for _ in range(m_sys)]
    last_received: list[np.ndarray | None] = [None] * m_sys

    trace = Trace(dim, config.steps * m_sys)
    m_clip = np.zeros((config.steps, m_sys))  # clipped stability ratio per slot

    for k in range(config.steps):
        channels = [draw_channel(rng_chan[i], dim, radio.n0) for i in range(m_sys)]

        predictions: list[GprPrediction | None]
        if config.predictor:
            predictions = [predict(databases[i], k, config.gpr) for i in range(m_sys)]
            tr_k = np.array([p.tr_k for p in predictions])
        else:
            predictions = [None] * m_sys
            tr_k = np.zeros(m_sys)

        p_star = np.array(
            [power_opt(channels[i], radio.snr_th, queues.q_power[i], radio.p_max) for i in range(m_sys)]
        )
        tr_v = np.array(
            [float(np.trace(mmse_error_cov(p_star[i], channels[i], sigma_x))) for i in range(m_sys)]
        )

        ratios = np.array([stability_ratio(tr_k[i], tr_v[i]) for i in range(m_sys)])
        m_bars = tracker.update(ratios)
        m_clip[k] = np.maximum(ratios, 0.0)

        gamma_beta = np.array([aux_beta_opt(queues.q_beta[i], lyap) for i in range(m_sys)])
        gamma_power = np.array([aux_power_opt(queues.q_power[i], lyap, radio.p_max) for i in range(m_sys)])

        if proposed:
            alpha = schedule(queues, betas, m_bars, p_star, warmup=k < config.warmup_slots)
        else:
            alpha = round_robin(k, m_sys)

        xi = np.zeros(m_sys, dtype=np.int64)
        estimates: list[np.ndarray | None] = [None] * m_sys
        for i in range(m_sys):
            if not alpha[i]:
                continue
            if success(snr(p_star[i], channels[i]), radio.snr_th):
                y = transmit(states[i].x, p_star[i], channels[i], rng_meas[i])
                est = mmse_estimate(y, p_star[i], channels[i], sigma_x)
                estimates[i] = est.x_bar
                last_received[i] = est.x_bar
                xi[i] = 1
                if config.predictor:
                    databases[i] = push(databases[i], k, est.x_bar)

        # Log the slot as seen by the scheduler: pre-step state, pre-update
        # AoI and queues, the decision and the auxiliaries it used.
        base = k * m_sys
        for i in range(m_sys):
            n = base + i
            trace.run[n] = run_index
            trace.slot[n] = k
            trace.system[n] = i
            trace.x[n] = states[i].x
            trace.abs_angle[n] = abs(states[i].x[2])
            trace.beta[n] = betas[i]
            trace.alpha[n] = int(alpha[i])
            trace.xi[n] = xi[i]
            trace.power[n] = p_star[i] if alpha[i] else 0.0
            trace.tr_k[n] = tr_k[i]
            trace.tr_v[n] = tr_v[i]
            trace.m_bar[n] = m_bars[i]
            trace.q_beta[n] = queues.q_beta[i]
            trace.q_power[n] = queues.q_power[i]
            trace.q_stab[n] = queues.q_stab[i]
            trace.gamma_beta[n] = gamma_beta[i]
            trace.gamma_power[n] = gamma_power[i]

        for i in range(m_sys):
            if frozen[i]:
                continue
            if xi[i]:
                u = control_input(model, 1, estimates[i], estimates[i])
            else:
                if config.predictor:
                    x_hat = predictions[i].x_hat
                else:
                    # No predictor: hold the last received estimate.
                    x_hat = last_received[i] if last_received[i] is not None else np.zeros(dim)
                u = control_input(model, 0, x_hat, x_hat)
            noise = (
                draw_plant_noise(rng_plant[i], model.w)
                if config.sigma_w2 > 0
                else np.zeros(dim)
            )
            states[i] = step(model, states[i], u, noise)
            if np.max(np.abs(states[i].x)) > STATE_CAP:
                frozen[i] = True
                frozen_slot[i] = k

        p_hat = np.where(alpha, p_star, 0.0)
        queues.q_beta = np.maximum(queues.q_beta - gamma_beta, 0.0) + betas
        queues.q_power = np.maximum(queues.q_power - gamma_power, 0.0) + p_hat
        queues.q_stab = np.maximum(queues.q_stab - np.maximum(m_bars, 0.0), 0.0) + alpha
        betas = 1 + (1 - xi) * betas

    metrics = _compute_metrics(config, trace, m_clip, frozen_slot)
    return trace, metrics


def _fraction_dominant(tr_k: np.ndarray, tr_v: np.ndarray, alpha: np.ndarray) -> float:
    sel = alpha == 1
    if not np.any(sel):
        return math.nan
    return float(np.mean(tr_k[sel] > tr_v[sel]))


def _compute_metrics(
    config: SimConfig, trace: Trace, m_clip: np.ndarray, frozen_slot: list[int | None]
) -> RunMetrics:
    m_sys = config.systems
    steps = config.steps
    shape = (steps, m_sys)
    angle = trace.abs_angle.reshape(shape)
    beta = trace.beta.reshape(shape)
    alpha = trace.alpha.reshape(shape)
    xi = trace.xi.reshape(shape)
    power = trace.power.reshape(shape)
    tr_k = trace.tr_k.reshape(shape)
    tr_v = trace.tr_v.reshape(shape)

    warm = min(config.warmup_slots, steps)
    post = slice(warm, steps)
    has_post = warm < steps

    per_sys_angle = angle.mean(axis=0)
    per_sys_peak_post = (
        beta[post].max(axis=0).astype(float) if has_post else np.full(m_sys, math.nan)
    )
    return RunMetrics(
        per_system_mean_abs_angle=per_sys_angle,
        fleet_mean_abs_angle=float(per_sys_angle.mean()),
        per_system_peak_aoi=beta.max(axis=0),
        per_system_mean_aoi=beta.mean(axis=0),
        peak_aoi=int(beta.max()),
        peak_aoi_post_warmup=float(beta[post].max()) if has_post else math.nan,
        per_system_peak_aoi_post_warmup=per_sys_peak_post,
        per_system_mean_power=power.mean(axis=0),
        mean_power=float(power.mean()),
        per_system_scheduling_rate=alpha.mean(axis=0),
        scheduling_rate=float(alpha.mean()),
        per_system_delivery_rate=xi.mean(axis=0),
        per_system_mean_stability_ratio=m_clip.mean(axis=0),
        pred_error_dominant_fraction=_fraction_dominant(tr_k, tr_v, alpha),
        pred_error_dominant_fraction_post_warmup=(
            _fraction_dominant(tr_k[post], tr_v[post], alpha[post]) if has_post else math.nan
        ),
        diverged=any(s is not None for s in frozen_slot),
        diverged_slot=min((s for s in frozen_slot if s is not None), default=None),
        per_system_diverged_slot=list(frozen_slot),
    )


@dataclass(eq=False)
class ExperimentResult:
    """Outcome of all runs of one configuration."""

    config: SimConfig
    per_run: list[RunMetrics]

    @property
    def diverged_runs(self) -> int:
        return sum(1 for m in self.per_run if m.diverged)

    def aggregate(self) -> dict:
        """Metrics document: one entry per metric with across-run mean/std and
        across-run per-system means, plus a ``meta`` block."""
        doc: dict = {}
        scalar_and_per_system = {
            "fleet_mean_abs_angle": ("fleet_mean_abs_angle", "per_system_mean_abs_angle"),
            "mean_aoi": (None, "per_system_mean_aoi"),
            "peak_aoi": ("peak_aoi", "per_system_peak_aoi"),
            "peak_aoi_post_warmup": ("peak_aoi_post_warmup", "per_system_peak_aoi_post_warmup"),
            "mean_power": ("mean_power", "per_system_mean_power"),
            "scheduling_rate": ("scheduling_rate", "per_system_scheduling_rate"),
            "delivery_rate": (None, "per_system_delivery_rate"),
            "mean_stability_ratio": (None, "per_system_mean_stability_ratio"),
        }
        for name, (scalar_field, vector_field) in scalar_and_per_system.items():
            per_sys = np.array([np.asarray(getattr(m, vector_field), dtype=float) for m in self.per_run])
            if scalar_field is None:
                scalars = per_sys.mean(axis=1)
            else:
                scalars = np.array([float(getattr(m, scalar_field)) for m in self.per_run])
            mean, std = _nanstats(scalars)
            doc[name] = {
                "mean": mean,
                "std": std,
                "per_system": [_nanstats(per_sys[:, i])[0] for i in range(per_sys.shape[1])],
            }
        for name in ("pred_error_dominant_fraction", "pred_error_dominant_fraction_post_warmup"):
            scalars = np.array([float(getattr(m, name)) for m in self.per_run])
            mean, std = _nanstats(scalars)
            doc[name] = {"mean": mean, "std": std, "per_system": None}
        doc["meta"] = {
            "scheduler": self.config.scheduler,
            "predictor": self.config.predictor,
            "systems": self.config.systems,
            "steps": self.config.steps,
            "runs": self.config.runs,
            "warmup_slots": self.config.warmup_slots,
            "master_seed": self.config.master_seed,
            "diverged_runs": self.diverged_runs,
        }
        return doc


def _nanstats(values: np.ndarray) -> tuple[float | None, float | None]:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return None, None
    return float(finite.mean()), float(finite.std())


def _run_indexed(args: tuple[SimConfig, int]) -> tuple[Trace, RunMetrics]:
    return run_once(args[0], args[1])


def run_experiment(
    config: SimConfig,
    on_trace: Callable[[int, Trace], None] | None = None,
    workers: int = 1,
) -> ExperimentResult:
    """Execute all runs of ``config``; runs are independent and may be fanned
    out over processes. ``on_trace`` receives each run's trace in run order
    (traces are not retained otherwise)."""
    per_run: list[RunMetrics] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for run_index, (trace, metrics) in enumerate(
                pool.map(_run_indexed, [(config, r) for r in range(config.runs)])
            ):
                if on_trace is not None:
                    on_trace(run_index, trace)
                per_run.append(metrics)
    else:
        for run_index in range(config.runs):
            trace, metrics = run_once(config, run_index)
            if on_trace is not None:
                on_trace(run_index, trace)
            per_run.append(metrics)
    return ExperimentResult(config=config, per_run=per_run)
