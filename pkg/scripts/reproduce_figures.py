#!/usr/bin/env python3
"""Run the bundled experiment presets and collect their outputs under one tree.

By default runs the desk-scale presets (minutes each on one core); pass
``--full`` to run the full-scale variants instead (hours each).  Each preset
writes its moment series, distributions, and manifest into ``<out>/<preset>/``.

Examples
--------
    python3 scripts/reproduce_figures.py                      # all desk presets
    python3 scripts/reproduce_figures.py fig1-desk            # just one
    python3 scripts/reproduce_figures.py --full fig3 --workers 4
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from dynloc import harness

DESK = ("fig1-desk", "fig2-desk", "fig3-desk", "fig4-desk")
FULL = ("fig1", "fig2", "fig3", "fig4")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("presets", nargs="*",
                        help="preset names (default: all desk presets, or all "
                             "full presets with --full)")
    parser.add_argument("--full", action="store_true",
                        help="default to the full-scale preset set")
    parser.add_argument("--out", type=Path, default=Path("runs"),
                        help="output root directory (default: runs/)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the preset RNG seed")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker processes for stochastic ensembles")
    args = parser.parse_args(argv)

    names = tuple(args.presets) or (FULL if args.full else DESK)
    for name in names:
        trap, numerics, experiment = harness.load_preset(name)
        if args.seed is not None:
            from dataclasses import replace
            numerics = replace(numerics, seed=args.seed)
        out = args.out / name
        print(f"== {name}: kind={experiment.kind} -> {out}", flush=True)
        t0 = time.time()
        summary = harness.run_experiment(trap, numerics, experiment, out,
                                         workers=args.workers)
        elapsed = time.time() - t0
        for key in ("window", "sweep_rows", "mcwf", "gamma0", "classical"):
            if key in summary:
                print(f"   {key}: {summary[key]}")
        print(f"   wall time {elapsed:.1f} s, files: "
              f"{', '.join(summary['files'])}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
