"""CSV/JSON serialization for simulation outputs.

Formatting is byte-stable: floats are written with Python's shortest
round-trip repr, JSON keys are sorted, and no wall-clock metadata is
embedded, so a fixed configuration and seed produce byte-identical files
regardless of worker count or rerun.

Schemas
    moments CSV        t,dx,dp,x_mean,p_mean,pop_e,norm2[,tag]
    distribution CSV   abscissa,P_g,P_e,P[,tag]
    matrix table CSV   n,k,l,re,im,abs
    sweep CSV          one row per detuning with window-averaged widths
    run manifest JSON  resolved configuration + code version
    records JSON       per-run RNG identity and jump logs
"""

from __future__ import annotations

import csv
import json
from math import sqrt
from pathlib import Path

import numpy as np

from dynloc import __version__
from dynloc.gridstate import Distribution, MomentSummary

__all__ = [
    "MOMENT_COLUMNS",
    "DISTRIBUTION_COLUMNS",
    "SWEEP_COLUMNS",
    "write_moments_csv",
    "read_moments_csv",
    "write_distribution_csv",
    "read_distribution_csv",
    "write_matrix_table_csv",
    "write_floquet_json",
    "write_records_json",
    "write_run_moments_csv",
    "write_sweep_csv",
    "read_sweep_csv",
    "write_manifest",
    "window_stats",
]

MOMENT_COLUMNS = ("t", "dx", "dp", "x_mean", "p_mean", "pop_e", "norm2")
DISTRIBUTION_COLUMNS = ("abscissa", "P_g", "P_e", "P")
SWEEP_COLUMNS = (
    "delta",
    "quantum_dx", "quantum_dx_err", "quantum_dp", "quantum_dp_err",
    "classical_dx", "classical_dx_err", "classical_dp", "classical_dp_err",
)


def _fmt(v) -> str:
    return repr(float(v))


def _write_lines(path, lines) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def _moment_row(m: MomentSummary) -> list[str]:
    return [_fmt(m.t), _fmt(m.dx_width), _fmt(m.dp_width), _fmt(m.x_mean),
            _fmt(m.p_mean), _fmt(m.pop_e), _fmt(m.norm2)]


def write_moments_csv(path, summaries, tag: str | None = None) -> Path:
    """Moment time series; an optional tag column labels the producer."""
    header = ",".join(MOMENT_COLUMNS + (("tag",) if tag else ()))
    lines = [header]
    for m in summaries:
        row = _moment_row(m)
        if tag:
            row.append(tag)
        lines.append(",".join(row))
    return _write_lines(path, lines)


def read_moments_csv(path) -> list[MomentSummary]:
    """Inverse of write_moments_csv; second moments are reconstructed."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            x_mean, p_mean = float(row["x_mean"]), float(row["p_mean"])
            dx, dp = float(row["dx"]), float(row["dp"])
            out.append(MomentSummary(
                t=float(row["t"]), x_mean=x_mean, x2_mean=dx**2 + x_mean**2,
                dx_width=dx, p_mean=p_mean, p2_mean=dp**2 + p_mean**2,
                dp_width=dp, pop_g=1.0 - float(row["pop_e"]),
                pop_e=float(row["pop_e"]), norm2=float(row["norm2"])))
    return out


def write_distribution_csv(path, dist: Distribution, tag: str | None = None) -> Path:
    header = ",".join(DISTRIBUTION_COLUMNS + (("tag",) if tag else ()))
    lines = [header]
    for a, g, e, p in zip(dist.abscissa, dist.p_g, dist.p_e, dist.p_total):
        row = [_fmt(a), _fmt(g), _fmt(e), _fmt(p)]
        if tag:
            row.append(tag)
        lines.append(",".join(row))
    return _write_lines(path, lines)


def read_distribution_csv(path, kind: str = "position") -> Distribution:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((float(row["abscissa"]), float(row["P_g"]),
                         float(row["P_e"]), float(row["P"])))
    arr = np.array(rows)
    spacing = float(arr[1, 0] - arr[0, 0]) if arr.shape[0] > 1 else 0.0
    return Distribution(abscissa=arr[:, 0], p_g=arr[:, 1], p_e=arr[:, 2],
                        p_total=arr[:, 3], spacing=spacing, kind=kind)


def write_matrix_table_csv(path, table) -> Path:
    """Coupling amplitudes w_l^(n,n+2k) as rows (n, k, l, re, im, abs)."""
    lines = ["n,k,l,re,im,abs"]
    for (n, k, l) in sorted(table.entries):
        v = table.entries[(n, k, l)]
        lines.append(f"{n},{k},{l},{_fmt(v.real)},{_fmt(v.imag)},{_fmt(abs(v))}")
    return _write_lines(path, lines)


def _dump_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def write_floquet_json(path, sol) -> Path:
    return _dump_json(path, sol.to_json_dict())


def write_records_json(path, records) -> Path:
    """Per-run provenance: RNG identity and the jump log."""
    payload = [
        {
            "run_index": r.run_index,
            "master_seed": r.master_seed,
            "jumps": [
                {"t": j.t, "p_recoil": j.p_recoil, "pop_e_before": j.pop_e_before}
                for j in r.jumps
            ],
        }
        for r in records
    ]
    return _dump_json(path, payload)


def write_run_moments_csv(path, records) -> Path:
    """All runs' raw moment series in one CSV, keyed by a leading run column."""
    lines = ["run," + ",".join(MOMENT_COLUMNS)]
    for r in records:
        for m in r.moments:
            lines.append(f"{r.run_index}," + ",".join(_moment_row(m)))
    return _write_lines(path, lines)


def write_sweep_csv(path, rows) -> Path:
    """One row per detuning; rows are dicts with the SWEEP_COLUMNS keys."""
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in SWEEP_COLUMNS))
    return _write_lines(path, lines)


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def write_manifest(path, config: dict, **extra) -> Path:
    """Run manifest embedding the resolved configuration and code version.

    Deliberately no timestamps or host details: outputs must be byte-identical
    for a fixed configuration and seed.
    """
    payload = {"version": __version__, "config": config}
    payload.update(extra)
    return _dump_json(path, payload)


def window_stats(summaries, window) -> dict:
    """Time-window averages of the widths with sampling errors.

    The error is the standard error of the mean over the in-window samples
    (a sampling-resolution diagnostic, not an independent-samples error bar:
    neighboring samples of one evolution are correlated).
    """
    t_a, t_b = window
    dx = np.array([m.dx_width for m in summaries if t_a <= m.t <= t_b])
    dp = np.array([m.dp_width for m in summaries if t_a <= m.t <= t_b])
    if dx.size == 0:
        raise ValueError(f"no samples inside window [{t_a}, {t_b}]")
    def sem(v):
        return float(v.std(ddof=1) / sqrt(v.size)) if v.size > 1 else 0.0
    return {
        "dx": float(dx.mean()), "dx_err": sem(dx),
        "dp": float(dp.mean()), "dp_err": sem(dp),
        "n_samples": int(dx.size),
    }
