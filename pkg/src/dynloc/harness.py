"""Experiment orchestration: presets, runners, sweeps, and output layout.

This module turns a validated configuration (``TrapParams``, ``NumericsConfig``,
``ExperimentInfo``) into files on disk.  The experiment kinds map to runners:

    quantum        one closed (norm-conserving) wave-packet evolution
    classical      one Hamilton/Bloch trajectory ensemble
    mcwf           quantum-jump ensemble + closed reference run + classical twin
    sweep          quantum vs. classical window-averaged widths per detuning
    floquet-table  secular-mode solution and coupling-amplitude table

Presets are data, not code: ``presets.json`` (shipped with the package) holds
one complete configuration document per named experiment.  The ``*-desk``
variants are parameter-reduced versions sized to finish on a single CPU core;
the plain variants reproduce the production-scale runs.

Every runner is deterministic given the configuration: classical ensembles
draw from ``default_rng(seed)``, quantum-jump runs derive per-run streams from
(seed, run index), and file formatting is byte-stable, so rerunning a
configuration (with any worker count) reproduces each output file exactly.

The ``quantum`` runner always propagates the closed system (``gamma`` is
ignored): decaying dynamics belong to the ``mcwf`` kind.  This is what makes
the runner reusable as the no-decay reference inside ``mcwf`` experiments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from math import sqrt
from pathlib import Path

import numpy as np

from dynloc import classical, io, mcwf
from dynloc.floquet import build_matrix_element_table, solve_mathieu
from dynloc.gridstate import (
    Distribution,
    Grid,
    SpinorField,
    init_gaussian,
    moments,
    momentum_distributions,
    position_distributions,
    window_average,
)
from dynloc.params import (
    ConfigError,
    ExperimentInfo,
    NumericsConfig,
    TrapParams,
    config_as_dict,
    load_config,
)
from dynloc.qevolve import PauliPotential, StepController, propagate

__all__ = [
    "SeriesResult",
    "DiffusionEstimate",
    "preset_names",
    "load_preset",
    "initial_field",
    "make_controller",
    "run_quantum",
    "run_classical",
    "run_floquet_table",
    "sweep_detuning",
    "run_experiment",
    "diffusion_diagnostic",
]

_INTERNAL_WEIGHTS = {"superposition": (1.0, 1.0), "ground": (1.0, 0.0)}


# ------------------------------------------------------------------ presets


def _preset_table() -> dict:
    text = resources.files("dynloc").joinpath("presets.json").read_text()
    return json.loads(text)


def preset_names() -> tuple:
    """Known preset names, sorted."""
    return tuple(sorted(_preset_table()))


def load_preset(name: str):
    """Return the (trap, numerics, experiment) triple for a named preset.

    The stored document passes through the same validation as a user
    configuration file.
    """
    table = _preset_table()
    if name not in table:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(table))}"
        )
    return load_config(json.dumps(table[name]))


# ------------------------------------------------------------------ shared pieces


def initial_field(trap: TrapParams, numerics: NumericsConfig,
                  experiment: ExperimentInfo) -> SpinorField:
    """Minimum-uncertainty packet at the trap center, width sqrt(kbar).

    That width makes (dx, dp) = (sqrt(kbar), sqrt(kbar)/2) — the same first
    and second moments the classical ensemble is drawn with, so quantum and
    classical runs start from matched initial conditions.
    """
    grid = Grid(n=numerics.n_grid, x_max=numerics.x_max, kbar=trap.kbar)
    weights = _INTERNAL_WEIGHTS[experiment.initial_internal]
    return init_gaussian(grid, width=sqrt(trap.kbar), internal=weights)


def make_controller(numerics: NumericsConfig) -> StepController:
    return StepController(tol=numerics.tol, dt_min=numerics.dt_min,
                          dt_max=numerics.dt_max)


@dataclass
class SeriesResult:
    """A moment time series plus window-averaged densities."""

    summaries: list
    dist_x: Distribution | None
    dist_p: Distribution | None


# ------------------------------------------------------------------ runners


def run_quantum(trap: TrapParams, numerics: NumericsConfig,
                experiment: ExperimentInfo) -> SeriesResult:
    """One closed wave-packet evolution; gamma is deliberately ignored."""
    field = initial_field(trap, numerics, experiment)
    pot = PauliPotential(trap, field.grid)
    ctrl = make_controller(numerics)
    t_a, t_b = numerics.window
    summaries: list = []
    dists_x: list = []
    dists_p: list = []

    def observe(f: SpinorField) -> None:
        summaries.append(moments(f))
        if t_a <= f.t <= t_b:
            dists_x.append(position_distributions(f))
            dists_p.append(momentum_distributions(f))

    propagate(field, pot, 0.0, numerics.t_end, ctrl,
              observer=observe, stride=numerics.stride)
    dist_x = window_average(dists_x, numerics.window) if dists_x else None
    dist_p = window_average(dists_p, numerics.window) if dists_p else None
    return SeriesResult(summaries=summaries, dist_x=dist_x, dist_p=dist_p)


def run_classical(trap: TrapParams, numerics: NumericsConfig,
                  experiment: ExperimentInfo) -> SeriesResult:
    """One trajectory-ensemble evolution with window-averaged histograms.

    In-window phase-space snapshots are kept and histogrammed afterwards on a
    common abscissa (the per-sample auto-range would vary, which would make
    the snapshots impossible to average).
    """
    ens = classical.sample_ensemble(numerics.seed, numerics.trajectories,
                                    trap.kbar, trap,
                                    internal=experiment.initial_internal)
    t_a, t_b = numerics.window
    summaries: list = []
    snapshots: list = []

    def observe(e) -> None:
        summaries.append(classical.ensemble_observables(e, bins=1)[2])
        if t_a <= e.t <= t_b:
            snapshots.append((e.t, e.y.copy()))

    classical.integrate_ensemble(ens, numerics.t_end, rtol=numerics.tol,
                                 observer=observe, stride=numerics.stride)
    dist_x = dist_p = None
    if snapshots:
        lim_x = 1.05 * max(max(float(np.max(np.abs(y[0]))) for _, y in snapshots), 1e-12)
        lim_p = 1.05 * max(max(float(np.max(np.abs(y[1]))) for _, y in snapshots), 1e-12)
        dists_x, dists_p = [], []
        for t, y in snapshots:
            snap = classical.Ensemble(y=y, trap=trap, t=t)
            dx_t, dp_t, _ = classical.ensemble_observables(
                snap, bins=numerics.bins,
                x_range=(-lim_x, lim_x), p_range=(-lim_p, lim_p))
            dists_x.append(dx_t)
            dists_p.append(dp_t)
        dist_x = window_average(dists_x, numerics.window)
        dist_p = window_average(dists_p, numerics.window)
    return SeriesResult(summaries=summaries, dist_x=dist_x, dist_p=dist_p)


def run_floquet_table(trap: TrapParams, nmax: int = 30,
                      k_values=(1, 2), l_values=(0,)):
    """Secular-mode solution plus the coupling amplitudes w_l^(n,n+2k).

    The default index sets tabulate the two resonance families
    |w_0^(n,n+2)| (k=1) and |w_0^(n,n+4)| (k=2) for n = 0..nmax.
    """
    if nmax < 0:
        raise ValueError(f"nmax must be nonnegative, got {nmax}")
    sol = solve_mathieu(trap.a, trap.q, kbar=trap.kbar)
    table = build_matrix_element_table(sol, trap.omega0, range(nmax + 1),
                                       k_values=k_values, l_values=l_values)
    return sol, table


def sweep_detuning(trap: TrapParams, numerics: NumericsConfig,
                   experiment: ExperimentInfo, out_dir=None) -> list:
    """Quantum vs. classical window-averaged widths, one row per detuning.

    Each detuning runs the same initial conditions (same packet, same
    classical seed); a single-element sweep is therefore exactly the
    quantum/classical pair of individual runs.  When ``out_dir`` is given,
    the per-detuning series land in ``delta_000/``, ``delta_001/``, ...
    """
    deltas = experiment.sweep_deltas if experiment.sweep_deltas else (trap.delta,)
    rows = []
    for i, delta in enumerate(deltas):
        trap_d = replace(trap, delta=float(delta))
        q = run_quantum(trap_d, numerics, experiment)
        c = run_classical(trap_d, numerics, experiment)
        qs = io.window_stats(q.summaries, numerics.window)
        cs = io.window_stats(c.summaries, numerics.window)
        rows.append({
            "delta": float(delta),
            "quantum_dx": qs["dx"], "quantum_dx_err": qs["dx_err"],
            "quantum_dp": qs["dp"], "quantum_dp_err": qs["dp_err"],
            "classical_dx": cs["dx"], "classical_dx_err": cs["dx_err"],
            "classical_dp": cs["dp"], "classical_dp_err": cs["dp_err"],
        })
        if out_dir is not None:
            sub = Path(out_dir) / f"delta_{i:03d}"
            io.write_moments_csv(sub / "moments_quantum.csv", q.summaries, tag="quantum")
            io.write_moments_csv(sub / "moments_classical.csv", c.summaries, tag="classical")
            if q.dist_x is not None:
                io.write_distribution_csv(sub / "dist_x_quantum.csv", q.dist_x, tag="quantum")
                io.write_distribution_csv(sub / "dist_p_quantum.csv", q.dist_p, tag="quantum")
            if c.dist_x is not None:
                io.write_distribution_csv(sub / "dist_x_classical.csv", c.dist_x, tag="classical")
                io.write_distribution_csv(sub / "dist_p_classical.csv", c.dist_p, tag="classical")
    return rows


# ------------------------------------------------------------------ dispatch


def _write_series(out: Path, stem: str, res: SeriesResult, tag: str) -> list:
    files = [io.write_moments_csv(out / f"moments_{stem}.csv", res.summaries, tag=tag)]
    if res.dist_x is not None:
        files.append(io.write_distribution_csv(out / f"dist_x_{stem}.csv", res.dist_x, tag=tag))
    if res.dist_p is not None:
        files.append(io.write_distribution_csv(out / f"dist_p_{stem}.csv", res.dist_p, tag=tag))
    return files


def run_experiment(trap: TrapParams, numerics: NumericsConfig,
                   experiment: ExperimentInfo, out_dir, workers: int = 1) -> dict:
    """Run one configured experiment and write its outputs under out_dir.

    Returns a summary dict (also embedded in ``manifest.json``) with the
    window statistics and the list of files written.  Only quantum-jump
    ensembles fan out across ``workers``; everything else runs in-process,
    and outputs are byte-identical for any worker count.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = experiment.kind
    files: list = []
    extra: dict = {}

    if kind == "quantum":
        res = run_quantum(trap, numerics, experiment)
        files += _write_series(out, "quantum", res, "quantum")
        extra["quantum"] = io.window_stats(res.summaries, numerics.window)

    elif kind == "classical":
        res = run_classical(trap, numerics, experiment)
        files += _write_series(out, "classical", res, "classical")
        extra["classical"] = io.window_stats(res.summaries, numerics.window)

    elif kind == "mcwf":
        initial = initial_field(trap, numerics, experiment)
        result = mcwf.run_ensemble(trap, numerics, initial, workers=workers)
        jump_res = SeriesResult(summaries=result.summaries,
                                dist_x=result.dist_x, dist_p=result.dist_p)
        files += _write_series(out, "mcwf", jump_res, "mcwf")
        files.append(io.write_run_moments_csv(out / "run_moments.csv", result.records))
        files.append(io.write_records_json(out / "records.json", result.records))
        extra["mcwf"] = io.window_stats(result.summaries, numerics.window)
        extra["mcwf"]["runs"] = numerics.runs
        extra["mcwf"]["total_jumps"] = int(sum(len(r.jumps) for r in result.records))

        ref = run_quantum(trap, numerics, experiment)
        files.append(io.write_moments_csv(out / "moments_gamma0.csv",
                                          ref.summaries, tag="quantum"))
        extra["gamma0"] = io.window_stats(ref.summaries, numerics.window)

        cls = run_classical(trap, numerics, experiment)
        files += _write_series(out, "classical", cls, "classical")
        extra["classical"] = io.window_stats(cls.summaries, numerics.window)

    elif kind == "sweep":
        rows = sweep_detuning(trap, numerics, experiment, out_dir=out)
        files.append(io.write_sweep_csv(out / "sweep.csv", rows))
        files += sorted(p for p in out.glob("delta_*/*.csv"))
        extra["sweep_rows"] = rows

    elif kind == "floquet-table":
        sol, table = run_floquet_table(trap)
        files.append(io.write_floquet_json(out / "floquet.json", sol))
        files.append(io.write_matrix_table_csv(out / "matrix_table.csv", table))
        extra["floquet"] = {"omega_s": sol.omega_s, "omega_r": sol.omega_r,
                            "eta": sol.eta}

    else:  # pragma: no cover — ExperimentInfo already validates the kind
        raise ConfigError(f"unhandled experiment kind {kind!r}")

    summary = {
        "kind": kind,
        "files": sorted(str(Path(f).relative_to(out)) for f in files),
    }
    summary.update(extra)
    manifest = io.write_manifest(out / "manifest.json",
                                 config_as_dict(trap, numerics, experiment),
                                 **summary)
    summary["manifest"] = str(manifest)
    return summary


# ------------------------------------------------------------------ diagnostics


@dataclass(frozen=True)
class DiffusionEstimate:
    """Linear-growth fit of dx^2(t): rate, derived length, and fit quality."""

    d_coeff: float        # half the fitted slope of dx^2 vs t
    loc_length: float     # d_coeff / kbar^2, the localization-length scale
    residual_rms: float   # rms deviation of dx^2 from the linear fit
    window: tuple
    n_points: int


def diffusion_diagnostic(times, dx_widths, kbar: float,
                         window=None) -> DiffusionEstimate:
    """Least-squares estimate of the spatial diffusion coefficient.

    Fits dx^2(t) = 2 D t + c over the requested window and reports
    D together with the predicted localization length D / kbar^2 (the
    scale on which interference arrests the diffusive spreading; halving
    the effective Planck constant quadruples it).  The rms residual
    measures how linear the growth actually is.
    """
    if kbar <= 0.0:
        raise ValueError(f"kbar must be positive, got {kbar}")
    t = np.asarray(times, dtype=float)
    w = np.asarray(dx_widths, dtype=float)
    if t.shape != w.shape or t.ndim != 1:
        raise ValueError("times and dx_widths must be 1-d arrays of equal length")
    if window is not None:
        t_a, t_b = window
        sel = (t >= t_a) & (t <= t_b)
        t, w = t[sel], w[sel]
    else:
        window = (float(t[0]), float(t[-1])) if t.size else (0.0, 0.0)
    if np.unique(t).size < 2:
        raise ValueError("diffusion fit needs at least two distinct sample times")
    y = w**2
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    return DiffusionEstimate(
        d_coeff=float(slope / 2.0),
        loc_length=float(slope / 2.0 / kbar**2),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        window=(float(window[0]), float(window[1])),
        n_points=int(t.size),
    )
