"""Command-line entry point: configure, run and compare experiments.

Exit codes: 0 success, 2 configuration error, 3 more than half of the runs
diverged. Output files are written atomically (temp file + rename) into the
out directory (``--out-dir``, else ``$AOI_COPILOT_OUT``, else ``./out``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import IO

from .gpr import GprHyperparams
from .scheduler import LyapunovParams
from .sim import SCHEDULER_KINDS, ExperimentResult, SimConfig, run_experiment
from .wireless import RadioParams

__all__ = ["main", "build_config", "ConfigError"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3


class ConfigError(ValueError):
    """Configuration file or flag combination is invalid."""


_SCHEMA = {
    "systems": int,
    "steps": int,
    "runs": int,
    "scheduler": str,
    "predictor": bool,
    "sigma_w2": (int, float),
    "warmup_slots": int,
    "x0": list,
    "master_seed": int,
    "gpr_window": int,
    "radio": {"p_max": (int, float), "snr_th": (int, float), "n0": (int, float)},
    "lyapunov": {"v_weight": (int, float), "omega_beta": (int, float), "omega_power": (int, float)},
    "gpr": {"output_scale": (int, float), "length_scale": (int, float), "jitter": (int, float, type(None))},
}


def _check_keys(data: dict, schema: dict, prefix: str = "") -> list[str]:
    problems = []
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in schema:
            problems.append(f"unknown key '{path}'")
            continue
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                problems.append(f"'{path}' must be an object")
            else:
                problems.extend(_check_keys(value, expected, prefix=f"{path}."))
        elif isinstance(value, bool) and expected is not bool:
            problems.append(f"'{path}' must have type {expected}")
        elif not isinstance(value, expected):
            problems.append(f"'{path}' must have type {expected}")
    return problems


def build_config(data: dict) -> SimConfig:
    """Turn a validated config dictionary into a :class:`SimConfig`."""
    problems = _check_keys(data, _SCHEMA)
    if problems:
        raise ConfigError("; ".join(problems))
    kwargs = {k: v for k, v in data.items() if k in ("systems", "steps", "runs", "scheduler", "predictor", "sigma_w2", "warmup_slots", "master_seed", "gpr_window")}
    if "x0" in data:
        kwargs["x0"] = tuple(float(v) for v in data["x0"])
    if "radio" in data:
        kwargs["radio"] = RadioParams(**data["radio"])
    if "lyapunov" in data:
        kwargs["lyapunov"] = LyapunovParams(**data["lyapunov"])
    if "gpr" in data:
        kwargs["gpr"] = GprHyperparams(**data["gpr"])
    try:
        return SimConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a JSON object")
    return data


def _apply_overrides(config: SimConfig, args: argparse.Namespace) -> SimConfig:
    updates = {}
    if args.scheduler is not None:
        updates["scheduler"] = args.scheduler
    if args.no_gpr:
        updates["predictor"] = False
    for flag, fieldname in (("steps", "steps"), ("systems", "systems"), ("runs", "runs"), ("seed", "master_seed")):
        value = getattr(args, flag)
        if value is not None:
            updates[fieldname] = value
    if not updates:
        return config
    try:
        return dataclasses.replace(config, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _run_to_files(config: SimConfig, out_dir: Path, workers: int) -> ExperimentResult:
    """Run one experiment, streaming the trace CSV and writing the metrics JSON."""
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / f"trace_{config.scheduler}.csv"
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=trace_path.name, suffix=".tmp")
    state: dict[str, IO[str] | None] = {"fh": os.fdopen(fd, "w")}

    def on_trace(run_index, trace):
        fh = state["fh"]
        if run_index == 0:
            fh.write(",".join(trace.header()) + "\n")
        trace.write_rows(fh)

    try:
        result = run_experiment(config, on_trace=on_trace, workers=workers)
        state["fh"].close()
        os.replace(tmp, trace_path)
    except BaseException:
        state["fh"].close()
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    metrics_path = out_dir / f"metrics_{config.scheduler}.json"
    _atomic_write_text(metrics_path, json.dumps(result.aggregate(), indent=2) + "\n")
    return result


def _too_many_diverged(result: ExperimentResult) -> bool:
    return result.diverged_runs > 0.5 * result.config.runs


def _ratio(numerator: float | None, denominator: float | None) -> float | None:
    if numerator is None or denominator is None or denominator == 0:
        return None
    return numerator / denominator


def cmd_run(args: argparse.Namespace) -> int:
    config = _apply_overrides(build_config(_load_config(args.config)), args)
    out_dir = Path(args.out_dir)
    result = _run_to_files(config, out_dir, args.workers)
    print(f"wrote {out_dir / f'trace_{config.scheduler}.csv'} and metrics ({result.diverged_runs}/{config.runs} diverged runs)")
    return EXIT_UNSTABLE if _too_many_diverged(result) else EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    base = _apply_overrides(build_config(_load_config(args.config)), args)
    out_dir = Path(args.out_dir)
    proposed_cfg = dataclasses.replace(base, scheduler="proposed")
    baseline_cfg = dataclasses.replace(base, scheduler="round_robin", predictor=False)

    proposed = _run_to_files(proposed_cfg, out_dir, args.workers)
    baseline = _run_to_files(baseline_cfg, out_dir, args.workers)
    agg_p = proposed.aggregate()
    agg_b = baseline.aggregate()

    comparison = {
        "error_ratio": _ratio(agg_b["fleet_mean_abs_angle"]["mean"], agg_p["fleet_mean_abs_angle"]["mean"]),
        "peak_aoi_ratio": _ratio(agg_p["peak_aoi_post_warmup"]["mean"], agg_b["peak_aoi_post_warmup"]["mean"]),
        "pred_error_dominant_fraction_post_warmup": agg_p["pred_error_dominant_fraction_post_warmup"]["mean"],
        "proposed": {
            "trace": "trace_proposed.csv",
            "metrics": "metrics_proposed.json",
            "fleet_mean_abs_angle": agg_p["fleet_mean_abs_angle"]["mean"],
            "diverged_runs": proposed.diverged_runs,
        },
        "baseline": {
            "trace": "trace_round_robin.csv",
            "metrics": "metrics_round_robin.json",
            "fleet_mean_abs_angle": agg_b["fleet_mean_abs_angle"]["mean"],
            "diverged_runs": baseline.diverged_runs,
        },
    }
    _atomic_write_text(out_dir / "comparison.json", json.dumps(comparison, indent=2) + "\n")
    print(f"wrote {out_dir / 'comparison.json'} (error ratio: {comparison['error_ratio']})")
    if _too_many_diverged(proposed) or _too_many_diverged(baseline):
        return EXIT_UNSTABLE
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aoi-copilot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    default_out = os.environ.get("AOI_COPILOT_OUT", "out")
    for name, handler in (("run", cmd_run), ("compare", cmd_compare)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file mirroring the simulator configuration")
        p.add_argument("--scheduler", choices=SCHEDULER_KINDS)
        p.add_argument("--no-gpr", action="store_true", help="disable the state predictor")
        p.add_argument("--steps", type=int)
        p.add_argument("--systems", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out-dir", default=default_out)
        p.add_argument("--workers", type=int, default=1, help="processes for independent runs")
        p.set_defaults(handler=handler)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
