#!/usr/bin/env python3
"""Estimate a late-time momentum-diffusion coefficient from a moment series.

Reads a ``moments_*.csv`` produced by the harness, fits Δx²(t) linearly over
the requested time window, and reports the diffusion coefficient together
with the localization-length scale D/k̄² that a matching exponentially
localized distribution would have.

Example
-------
    python3 scripts/diffusion_report.py runs/fig1-desk/delta_000/moments_classical.csv \
        --kbar 0.29 --window 251.3 314.2
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from dynloc import harness, io


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv", type=Path, help="moments CSV written by the harness")
    parser.add_argument("--kbar", type=float, required=True,
                        help="scaled Planck constant of the run (sets the "
                             "localization-length conversion)")
    parser.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"),
                        default=None, help="fit window in scaled time "
                        "(default: full series)")
    args = parser.parse_args(argv)

    summaries = io.read_moments_csv(args.csv)
    times = np.array([m.t for m in summaries])
    widths = np.array([m.dx_width for m in summaries])
    window = tuple(args.window) if args.window else None
    est = harness.diffusion_diagnostic(times, widths, args.kbar, window=window)

    print(f"series: {args.csv} ({est.n_points} samples in window "
          f"[{est.window[0]:.4g}, {est.window[1]:.4g}])")
    print(f"diffusion coefficient D = {est.d_coeff:.6g} (d<x^2>/dt / 2)")
    print(f"localization length D/kbar^2 = {est.loc_length:.6g}")
    print(f"linear-fit residual rms = {est.residual_rms:.3g} "
          f"(large values mean the series is not diffusive in this window)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
