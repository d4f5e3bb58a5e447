"""Command-line interface.

    dynloc run <config.json>            run the experiment a config describes
    dynloc preset <name>                run a named preset (fig1, fig1-desk, ...)
    dynloc sweep --delta 0:3:0.05 <config.json>
                                        detuning sweep, overriding the config's list
    dynloc floquet-table --a 0 --q 0.4 --nmax 30
                                        secular solution + coupling-amplitude table

Common flags: --seed (override the RNG seed), --out (output directory,
default ./dynloc-out), --workers (process count for quantum-jump ensembles).
Exit status: 0 on success, 2 on configuration errors, 1 on runtime failures
such as a wave packet reaching the grid boundary.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from dynloc import harness, io
from dynloc.gridstate import LeakError
from dynloc.params import ConfigError, TrapParams, load_config

__all__ = ["main", "parse_delta_spec"]


def parse_delta_spec(spec: str) -> tuple:
    """Parse a detuning list: 'start:stop:step' (inclusive) or 'a,b,c'.

    Range endpoints are snapped to 12 decimals so '0:3:0.05' ends exactly
    at 3.0 instead of accumulating float error.
    """
    spec = spec.strip()
    try:
        if ":" in spec:
            parts = spec.split(":")
            if len(parts) != 3:
                raise ValueError("range must be start:stop:step")
            start, stop, step = (float(p) for p in parts)
            if step <= 0.0:
                raise ValueError("step must be positive")
            if stop < start:
                raise ValueError("stop must be >= start")
            count = int((stop - start) / step + 1e-9) + 1
            values = tuple(round(start + i * step, 12) for i in range(count))
        else:
            values = tuple(float(p) for p in spec.split(",") if p.strip())
        if not values:
            raise ValueError("empty detuning list")
        return values
    except ValueError as err:
        raise ConfigError(f"bad --delta spec {spec!r}: {err}") from None


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="override the configured RNG seed")
    parser.add_argument("--out", type=Path, default=Path("dynloc-out"),
                        help="output directory (default: ./dynloc-out)")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker processes for quantum-jump ensembles")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynloc",
        description="Quantum and classical dynamics of a driven ion in a "
                    "radio-frequency trap.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment a config file describes")
    p_run.add_argument("config", type=Path)
    _add_common(p_run)

    p_preset = sub.add_parser("preset", help="run a named preset experiment")
    p_preset.add_argument("name", metavar="name",
                          help="one of: " + ", ".join(harness.preset_names()))
    _add_common(p_preset)

    p_sweep = sub.add_parser("sweep", help="detuning sweep over a config file")
    p_sweep.add_argument("config", type=Path)
    p_sweep.add_argument("--delta", required=True,
                         help="detunings as start:stop:step (inclusive) or a,b,c")
    _add_common(p_sweep)

    p_floq = sub.add_parser("floquet-table",
                            help="secular solution and coupling amplitudes")
    p_floq.add_argument("--a", type=float, default=0.0, help="static trap parameter")
    p_floq.add_argument("--q", type=float, default=0.4, help="drive trap parameter")
    p_floq.add_argument("--nmax", type=int, default=30,
                        help="largest oscillator index n (default 30)")
    p_floq.add_argument("--kbar", type=float, default=0.29,
                        help="effective Planck constant (default 0.29)")
    p_floq.add_argument("--omega0", type=float, default=1.0,
                        help="coupling amplitude scale (default 1)")
    p_floq.add_argument("--out", type=Path, default=Path("dynloc-out"))
    return parser


def _load_from_file(path: Path):
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return load_config(text)


def _report(summary: dict, out: Path) -> None:
    print(f"experiment kind: {summary['kind']}")
    for key in ("quantum", "classical", "mcwf", "gamma0"):
        stats = summary.get(key)
        if stats:
            print(f"  {key}: window dx = {stats['dx']:.6g} +- {stats['dx_err']:.2g}"
                  f"  dp = {stats['dp']:.6g} +- {stats['dp_err']:.2g}")
    if "sweep_rows" in summary:
        for row in summary["sweep_rows"]:
            print(f"  delta = {row['delta']:.6g}: quantum dx = {row['quantum_dx']:.6g}"
                  f"  classical dx = {row['classical_dx']:.6g}")
    if "floquet" in summary:
        fl = summary["floquet"]
        print(f"  omega_s = {fl['omega_s']:.10g}  omega_r = {fl['omega_r']:.10g}"
              f"  eta = {fl['eta']:.10g}")
    for name in summary["files"] + ["manifest.json"]:
        print(f"wrote {out / name}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "floquet-table":
            trap = TrapParams(a=args.a, q=args.q, omega0=args.omega0,
                              delta=0.0, kbar=args.kbar)
            sol, table = harness.run_floquet_table(trap, nmax=args.nmax)
            out = args.out
            out.mkdir(parents=True, exist_ok=True)
            f1 = io.write_floquet_json(out / "floquet.json", sol)
            f2 = io.write_matrix_table_csv(out / "matrix_table.csv", table)
            print(f"omega_s = {sol.omega_s:.10g}  omega_r = {sol.omega_r:.10g}"
                  f"  eta = {sol.eta:.10g}")
            print(f"wrote {f1}")
            print(f"wrote {f2}")
            return 0

        if args.command == "preset":
            trap, numerics, experiment = harness.load_preset(args.name)
        else:
            trap, numerics, experiment = _load_from_file(args.config)

        if args.command == "sweep":
            experiment = replace(experiment, kind="sweep",
                                 sweep_deltas=parse_delta_spec(args.delta))
        if args.seed is not None:
            numerics = replace(numerics, seed=args.seed)

        summary = harness.run_experiment(trap, numerics, experiment,
                                         out_dir=args.out, workers=args.workers)
        _report(summary, args.out)
        return 0
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (LeakError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
