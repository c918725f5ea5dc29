"""Simulator of wireless control loops co-designing scheduling, transmit power
and GP-based state prediction."""

from .gpr import GprDatabase, GprHyperparams, GprPrediction, predict, predict_dense, push, se_kernel
from .plant import LqrWeights, PlantModel, PlantState, lqr_gain, make_pendulum, spectral_radius
from .scheduler import LyapunovParams, VirtualQueues, round_robin, schedule
from .sim import ExperimentResult, RunMetrics, SimConfig, Trace, TraceRecord, run_experiment, run_once
from .wireless import ChannelDraw, MmseResult, RadioParams, draw_channel, mmse_estimate, snr, success

__version__ = "0.1.0"
