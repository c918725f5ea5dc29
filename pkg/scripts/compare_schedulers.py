#!/usr/bin/env python3
"""Run the scaled comparative experiment (10 loops, 3000 slots, 10 seeds) and
leave traces, metrics and comparison.json in the out directory.

Usage: python scripts/compare_schedulers.py [OUT_DIR] [--workers N]
"""

import sys

from aoi_copilot.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    out_dir = argv[0] if argv and not argv[0].startswith("-") else "out/comparison"
    extra = argv[1:] if argv and not argv[0].startswith("-") else argv
    sys.exit(
        main(
            [
                "compare",
                "--systems", "10",
                "--steps", "3000",
                "--runs", "10",
                "--out-dir", out_dir,
                *extra,
            ]
        )
    )
