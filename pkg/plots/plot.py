#!/usr/bin/env python3
"""Figure scripts for simulator trace CSVs.

Three figure kinds, matching the experiment outputs:

  control_error   per-system mean |pole angle| for a proposed trace and a
                  baseline trace on one axes
  aoi_timeline    one system's age-of-information sawtooth over one run
  error_traces    one system's prediction vs estimation error traces, with
                  markers at its scheduled slots

The scripts read only the trace CSV / metrics JSON contract; they never
recompute simulation quantities beyond grouping and averaging.

Usage: plot.py <kind> --trace t.csv [--baseline b.csv] [--system i] [--run r] --out fig.png
"""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

REQUIRED_COLUMNS = {"run", "slot", "system", "abs_angle", "beta", "alpha", "tr_k", "tr_v"}


def load_trace(path: str) -> pd.DataFrame:
    df = pd.read_csv(path)
    missing = REQUIRED_COLUMNS - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing trace columns {sorted(missing)}")
    if df.empty:
        raise ValueError(f"{path}: trace has no rows")
    return df


def control_error_series(df: pd.DataFrame) -> pd.Series:
    """Per-system mean |angle| across all runs and slots."""
    return df.groupby("system")["abs_angle"].mean()


def select_run(df: pd.DataFrame, system: int, run: int) -> pd.DataFrame:
    if system not in set(df["system"].unique()):
        raise ValueError(f"system index {system} not present in trace")
    if run not in set(df["run"].unique()):
        raise ValueError(f"run {run} not present in trace")
    sel = df[(df["system"] == system) & (df["run"] == run)]
    return sel.sort_values("slot")


def plot_control_error(trace_df: pd.DataFrame, baseline_df: pd.DataFrame, out: str):
    proposed = control_error_series(trace_df)
    baseline = control_error_series(baseline_df)
    if set(proposed.index) != set(baseline.index):
        raise ValueError(
            f"traces disagree on the fleet: {len(proposed)} vs {len(baseline)} systems"
        )
    if trace_df["slot"].max() != baseline_df["slot"].max():
        raise ValueError("traces disagree on the number of slots")

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(proposed.index, proposed.values, "o-", label="proposed (AoI-aware + prediction)")
    ax.plot(baseline.index, baseline.values, "s--", label="round robin (no prediction)")
    ax.set_yscale("log")
    ax.set_xlabel("control system")
    ax.set_ylabel("mean |pole angle| [rad]")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return proposed, baseline


def plot_aoi_timeline(df: pd.DataFrame, system: int, run: int, out: str) -> pd.DataFrame:
    sel = select_run(df, system, run)
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(sel["slot"], sel["beta"], drawstyle="steps-post")
    ax.set_xlabel("slot")
    ax.set_ylabel("age of information [slots]")
    ax.set_title(f"system {system}, run {run}")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return sel


def plot_error_traces(df: pd.DataFrame, system: int, run: int, out: str) -> pd.Series:
    """Returns the slots marked as scheduled, for downstream checks."""
    sel = select_run(df, system, run)
    scheduled = sel[sel["alpha"] == 1]["slot"]
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.plot(sel["slot"], sel["tr_k"], label="prediction error trace")
    ax.plot(sel["slot"], sel["tr_v"], label="estimation error trace")
    if not scheduled.empty:
        marked = sel[sel["alpha"] == 1]
        ax.plot(marked["slot"], marked["tr_k"], "v", markersize=4, label="scheduled slot")
    ax.set_xlabel("slot")
    ax.set_ylabel("error covariance trace")
    ax.set_title(f"system {system}, run {run}")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return scheduled


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="plot", description=__doc__)
    parser.add_argument("kind", choices=("control_error", "aoi_timeline", "error_traces"))
    parser.add_argument("--trace", required=True)
    parser.add_argument("--baseline", help="baseline trace (control_error only)")
    parser.add_argument("--system", type=int, default=0)
    parser.add_argument("--run", type=int, default=0)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        df = load_trace(args.trace)
        if args.kind == "control_error":
            if not args.baseline:
                raise ValueError("control_error needs --baseline")
            plot_control_error(df, load_trace(args.baseline), args.out)
        elif args.kind == "aoi_timeline":
            plot_aoi_timeline(df, args.system, args.run, args.out)
        else:
            plot_error_traces(df, args.system, args.run, args.out)
    except (ValueError, FileNotFoundError) as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
