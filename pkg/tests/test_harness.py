"""Harness and CLI tests: presets, runners, sweeps, outputs, determinism."""

import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from dynloc import cli, harness, io
from dynloc.floquet import solve_mathieu
from dynloc.gridstate import moments
from dynloc.params import ConfigError, ExperimentInfo, NumericsConfig, TrapParams

PI = math.pi


# ------------------------------------------------------------------ fixtures


def tiny_quantum_setup(**numerics_overrides):
    trap = TrapParams(a=0.0, q=0.4, omega0=2.24, delta=0.0, kbar=0.29, gamma=0.0)
    defaults = dict(n_grid=256, x_max=16.0, tol=1e-5, t_end=2 * PI,
                    stride=PI / 4, window=(PI, 2 * PI), trajectories=64,
                    bins=32, seed=321)
    defaults.update(numerics_overrides)
    numerics = NumericsConfig(**defaults)
    experiment = ExperimentInfo(kind="quantum")
    return trap, numerics, experiment


def tiny_mcwf_setup():
    trap = TrapParams(a=0.0, q=0.4, omega0=2.24, delta=0.0, kbar=0.29, gamma=2.0)
    numerics = NumericsConfig(n_grid=256, x_max=16.0, tol=1e-5, t_end=3.0,
                              stride=0.25, window=(2.0, 3.0), runs=3,
                              trajectories=48, bins=32, seed=1234)
    experiment = ExperimentInfo(kind="mcwf")
    return trap, numerics, experiment


def tiny_config_doc(**numerics_overrides):
    trap, numerics, _ = tiny_quantum_setup(**numerics_overrides)
    return {
        "trap": {"a": trap.a, "q": trap.q, "omega0": trap.omega0,
                 "delta": trap.delta, "kbar": trap.kbar, "gamma": trap.gamma},
        "numerics": {"n_grid": numerics.n_grid, "x_max": numerics.x_max,
                     "tol": numerics.tol, "t_end": numerics.t_end,
                     "stride": numerics.stride,
                     "window": list(numerics.window),
                     "trajectories": numerics.trajectories,
                     "bins": numerics.bins, "seed": numerics.seed},
        "experiment": {"type": "quantum"},
    }


def read_bytes_tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


# ------------------------------------------------------------------ presets


def test_preset_names_cover_all_figures():
    assert harness.preset_names() == (
        "fig1", "fig1-desk", "fig2", "fig2-desk",
        "fig3", "fig3-desk", "fig4", "fig4-desk",
    )


def test_preset_fig1_caption_parameters_exact():
    trap, numerics, experiment = harness.load_preset("fig1")
    assert trap == TrapParams(a=0.0, q=0.4, omega0=2.24, delta=0.0,
                              kbar=0.29, gamma=0.0)
    assert numerics.t_end == 500 * PI
    assert numerics.window == (450 * PI, 500 * PI)
    assert numerics.trajectories == 4096
    assert experiment.kind == "sweep"
    assert experiment.sweep_deltas == (0.0,)


def test_preset_fig3_caption_parameters_exact():
    trap, numerics, experiment = harness.load_preset("fig3")
    assert trap.gamma == 2.0
    assert trap.omega0 == 2.24 and trap.kbar == 0.29 and trap.delta == 0.0
    assert numerics.runs == 79
    assert numerics.t_end == 250 * PI
    assert experiment.kind == "mcwf"
    assert experiment.initial_internal == "superposition"


def test_preset_fig4_caption_parameters_exact():
    trap, numerics, experiment = harness.load_preset("fig4")
    assert trap == TrapParams(a=0.0, q=0.4, omega0=94.69, delta=1000.0,
                              kbar=0.0725, gamma=2.0)
    assert numerics.runs == 49
    assert experiment.kind == "mcwf"
    assert experiment.initial_internal == "ground"


def test_preset_desk_variants_are_reduced_not_rescaled():
    for name in ("fig1", "fig2", "fig3", "fig4"):
        trap_full, num_full, exp_full = harness.load_preset(name)
        trap_desk, num_desk, exp_desk = harness.load_preset(name + "-desk")
        assert trap_desk == trap_full  # physics identical, numerics reduced
        assert num_desk.t_end <= num_full.t_end
        assert num_desk.n_grid <= num_full.n_grid
        assert exp_desk.kind == exp_full.kind
        assert exp_desk.initial_internal == exp_full.initial_internal


def test_preset_fig1_desk_matches_comparison_scale():
    _, numerics, experiment = harness.load_preset("fig1-desk")
    assert numerics.n_grid == 4096
    assert numerics.t_end == 100 * PI
    assert numerics.window == (80 * PI, 100 * PI)
    assert numerics.trajectories == 4096
    assert experiment.sweep_deltas == (0.0,)


def test_preset_fig2_desk_brackets_the_secular_resonance():
    _, _, experiment = harness.load_preset("fig2-desk")
    omega_s = solve_mathieu(0.0, 0.4).omega_s
    deltas = experiment.sweep_deltas
    assert len(deltas) == 6
    assert deltas[1] == pytest.approx(omega_s, abs=1e-12)
    assert deltas[0] == pytest.approx(omega_s - 0.15, abs=1e-12)
    assert deltas[2] == pytest.approx(omega_s + 0.15, abs=1e-12)
    assert deltas[3:] == (0.8, 0.95, 1.1)


def test_unknown_preset_rejected_with_available_names():
    with pytest.raises(ConfigError, match="fig1"):
        harness.load_preset("fig9")


# ------------------------------------------------------------------ initial state


def test_initial_field_matches_classical_moments():
    trap, numerics, experiment = tiny_quantum_setup()
    field = harness.initial_field(trap, numerics, experiment)
    m = moments(field)
    root = math.sqrt(trap.kbar)
    assert m.norm2 == pytest.approx(1.0, abs=1e-12)
    assert m.dx_width == pytest.approx(root, rel=1e-6)
    assert m.dp_width == pytest.approx(root / 2.0, rel=1e-6)
    assert m.pop_e == pytest.approx(0.5, abs=1e-12)


def test_initial_field_ground_state_has_no_excited_population():
    trap, numerics, experiment = tiny_quantum_setup()
    experiment = replace(experiment, initial_internal="ground")
    field = harness.initial_field(trap, numerics, experiment)
    assert moments(field).pop_e == 0.0


# ------------------------------------------------------------------ runners


def test_run_quantum_series_shape_and_norm():
    trap, numerics, experiment = tiny_quantum_setup()
    res = harness.run_quantum(trap, numerics, experiment)
    assert len(res.summaries) == 9  # t = 0 plus 8 stride samples
    assert res.summaries[0].t == 0.0
    assert res.summaries[-1].t == pytest.approx(numerics.t_end)
    for m in res.summaries:
        assert m.norm2 == pytest.approx(1.0, abs=1e-9)
    assert res.dist_x is not None and res.dist_p is not None
    assert res.dist_x.t == pytest.approx(1.5 * PI)  # window midpoint
    assert res.dist_x.integral() == pytest.approx(1.0, abs=1e-9)


def test_run_quantum_ignores_gamma():
    trap, numerics, experiment = tiny_quantum_setup()
    closed = harness.run_quantum(trap, numerics, experiment)
    damped = harness.run_quantum(replace(trap, gamma=2.0), numerics, experiment)
    for a, b in zip(closed.summaries, damped.summaries):
        assert a == b


def test_run_classical_series_and_determinism():
    trap, numerics, experiment = tiny_quantum_setup()
    res1 = harness.run_classical(trap, numerics, experiment)
    res2 = harness.run_classical(trap, numerics, experiment)
    assert len(res1.summaries) == 9
    for a, b in zip(res1.summaries, res2.summaries):
        assert a == b  # same seed, same trajectory ensemble, bit for bit
    assert res1.dist_x.integral() == pytest.approx(1.0, rel=1e-9)
    assert np.array_equal(res1.dist_x.p_total, res2.dist_x.p_total)
    # window-averaged snapshots share one abscissa by construction
    assert res1.dist_x.t == pytest.approx(1.5 * PI)


def test_run_classical_ground_internal_star_population():
    trap, numerics, experiment = tiny_quantum_setup()
    experiment = replace(experiment, initial_internal="ground")
    res = harness.run_classical(trap, numerics, experiment)
    assert res.summaries[0].pop_e == pytest.approx(0.0, abs=1e-12)


def test_sweep_singleton_equals_individual_runs():
    trap, numerics, _ = tiny_quantum_setup()
    experiment = ExperimentInfo(kind="sweep", sweep_deltas=(0.7,))
    rows = harness.sweep_detuning(trap, numerics, experiment)
    trap_d = replace(trap, delta=0.7)
    qs = io.window_stats(harness.run_quantum(trap_d, numerics, experiment).summaries,
                         numerics.window)
    cs = io.window_stats(harness.run_classical(trap_d, numerics, experiment).summaries,
                         numerics.window)
    assert rows[0]["delta"] == 0.7
    assert rows[0]["quantum_dx"] == qs["dx"]
    assert rows[0]["quantum_dp"] == qs["dp"]
    assert rows[0]["classical_dx"] == cs["dx"]
    assert rows[0]["classical_dx_err"] == cs["dx_err"]


def test_sweep_uses_trap_delta_when_no_list_given():
    trap, numerics, _ = tiny_quantum_setup()
    trap = replace(trap, delta=0.3)
    experiment = ExperimentInfo(kind="sweep")
    rows = harness.sweep_detuning(trap, numerics, experiment)
    assert len(rows) == 1 and rows[0]["delta"] == 0.3


# ------------------------------------------------------------------ run_experiment


def test_run_experiment_quantum_outputs(tmp_path):
    trap, numerics, experiment = tiny_quantum_setup()
    summary = harness.run_experiment(trap, numerics, experiment, tmp_path)
    assert summary["kind"] == "quantum"
    for name in ("moments_quantum.csv", "dist_x_quantum.csv",
                 "dist_p_quantum.csv", "manifest.json"):
        assert (tmp_path / name).is_file()
    assert summary["quantum"]["dx"] > 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["trap"]["omega0"] == trap.omega0
    assert manifest["config"]["numerics"]["seed"] == numerics.seed
    assert sorted(manifest["files"]) == summary["files"]
    series = io.read_moments_csv(tmp_path / "moments_quantum.csv")
    assert len(series) == len(harness.run_quantum(trap, numerics, experiment).summaries)


def test_run_experiment_classical_outputs(tmp_path):
    trap, numerics, experiment = tiny_quantum_setup()
    experiment = replace(experiment, kind="classical")
    summary = harness.run_experiment(trap, numerics, experiment, tmp_path)
    assert (tmp_path / "moments_classical.csv").is_file()
    assert (tmp_path / "dist_x_classical.csv").is_file()
    assert summary["classical"]["n_samples"] == 5


def test_run_experiment_mcwf_outputs(tmp_path):
    trap, numerics, experiment = tiny_mcwf_setup()
    summary = harness.run_experiment(trap, numerics, experiment, tmp_path)
    expected = {
        "moments_mcwf.csv", "dist_x_mcwf.csv", "dist_p_mcwf.csv",
        "run_moments.csv", "records.json", "moments_gamma0.csv",
        "moments_classical.csv", "dist_x_classical.csv", "dist_p_classical.csv",
    }
    assert expected <= {p.name for p in tmp_path.iterdir()}
    assert summary["mcwf"]["runs"] == 3
    assert summary["mcwf"]["total_jumps"] >= 3  # gamma t_end ~ 3: every run jumps
    assert summary["gamma0"]["dx"] > 0
    assert summary["classical"]["dx"] > 0
    records = json.loads((tmp_path / "records.json").read_text())
    assert [r["run_index"] for r in records] == [0, 1, 2]
    assert all(r["master_seed"] == numerics.seed for r in records)


def test_run_experiment_sweep_outputs(tmp_path):
    trap, numerics, _ = tiny_quantum_setup()
    experiment = ExperimentInfo(kind="sweep", sweep_deltas=(0.0, 0.5))
    summary = harness.run_experiment(trap, numerics, experiment, tmp_path)
    rows = io.read_sweep_csv(tmp_path / "sweep.csv")
    assert [r["delta"] for r in rows] == [0.0, 0.5]
    assert (tmp_path / "delta_000" / "moments_quantum.csv").is_file()
    assert (tmp_path / "delta_001" / "moments_classical.csv").is_file()
    assert len(summary["sweep_rows"]) == 2


def test_run_experiment_floquet_table_outputs(tmp_path):
    trap, _, _ = tiny_quantum_setup()
    experiment = ExperimentInfo(kind="floquet-table")
    numerics = NumericsConfig(n_grid=256, x_max=16.0, t_end=1.0)
    summary = harness.run_experiment(trap, numerics, experiment, tmp_path)
    assert summary["floquet"]["omega_s"] == pytest.approx(0.2925662115, abs=1e-9)
    payload = json.loads((tmp_path / "floquet.json").read_text())
    assert payload["omega_s"] == summary["floquet"]["omega_s"]
    lines = (tmp_path / "matrix_table.csv").read_text().splitlines()
    assert lines[0] == "n,k,l,re,im,abs"
    # families k=1 and k=2 over n = 0..30
    assert len(lines) - 1 == 2 * 31


def test_run_experiment_reruns_are_byte_identical(tmp_path):
    trap, numerics, experiment = tiny_mcwf_setup()
    d1, d2 = tmp_path / "one", tmp_path / "two"
    harness.run_experiment(trap, numerics, experiment, d1, workers=1)
    harness.run_experiment(trap, numerics, experiment, d2, workers=2)
    t1, t2 = read_bytes_tree(d1), read_bytes_tree(d2)
    assert t1.keys() == t2.keys()
    for name in t1:
        assert t1[name] == t2[name], f"{name} differs between worker counts"


def test_run_experiment_seed_changes_outputs(tmp_path):
    trap, numerics, experiment = tiny_mcwf_setup()
    d1, d2 = tmp_path / "one", tmp_path / "two"
    harness.run_experiment(trap, numerics, experiment, d1)
    harness.run_experiment(trap, replace(numerics, seed=999), experiment, d2)
    assert (d1 / "records.json").read_bytes() != (d2 / "records.json").read_bytes()


# ------------------------------------------------------------------ diffusion


def test_diffusion_diagnostic_recovers_synthetic_rate():
    t = np.linspace(0.0, 50.0, 201)
    dx = np.sqrt(2.0 * 0.5 * t)  # dx^2 = 2 D t with D = 0.5 exactly
    est = harness.diffusion_diagnostic(t, dx, kbar=0.29)
    assert est.d_coeff == pytest.approx(0.5, abs=1e-9)
    assert est.loc_length == pytest.approx(0.5 / 0.29**2, rel=1e-9)
    assert est.residual_rms == pytest.approx(0.0, abs=1e-9)
    assert est.n_points == 201


def test_diffusion_length_scales_inversely_with_kbar_squared():
    t = np.linspace(0.0, 50.0, 201)
    dx = np.sqrt(2.0 * 0.5 * t)
    small = harness.diffusion_diagnostic(t, dx, kbar=0.29)
    large = harness.diffusion_diagnostic(t, dx, kbar=0.58)
    assert small.loc_length == pytest.approx(4.0 * large.loc_length, rel=1e-12)


def test_diffusion_diagnostic_window_selection_and_residual():
    t = np.linspace(0.0, 100.0, 401)
    dx2 = 2.0 * 0.3 * t
    dx2[t > 50.0] = dx2[t <= 50.0][-1]  # growth stops at t = 50
    est = harness.diffusion_diagnostic(t, np.sqrt(dx2), kbar=0.29, window=(0.0, 50.0))
    assert est.d_coeff == pytest.approx(0.3, abs=1e-9)
    assert est.window == (0.0, 50.0)
    full = harness.diffusion_diagnostic(t, np.sqrt(dx2), kbar=0.29)
    assert full.residual_rms > 1.0  # saturated tail breaks the linear fit


def test_diffusion_diagnostic_input_validation():
    t = np.linspace(0.0, 1.0, 5)
    with pytest.raises(ValueError, match="kbar"):
        harness.diffusion_diagnostic(t, t, kbar=0.0)
    with pytest.raises(ValueError, match="distinct"):
        harness.diffusion_diagnostic([1.0], [1.0], kbar=0.29)
    with pytest.raises(ValueError, match="distinct"):
        harness.diffusion_diagnostic(t, np.sqrt(t), kbar=0.29, window=(5.0, 6.0))
    with pytest.raises(ValueError, match="equal length"):
        harness.diffusion_diagnostic(t, t[:-1], kbar=0.29)


# ------------------------------------------------------------------ CLI


def test_parse_delta_range_inclusive_endpoints():
    values = cli.parse_delta_spec("0:3:0.05")
    assert len(values) == 61
    assert values[0] == 0.0
    assert values[-1] == 3.0
    assert values[1] == 0.05


def test_parse_delta_comma_list_and_errors():
    assert cli.parse_delta_spec("1,2,2.5") == (1.0, 2.0, 2.5)
    for bad in ("0:3", "3:0:0.5", "0:1:0", "0:1:-0.1", "", "a,b"):
        with pytest.raises(ConfigError):
            cli.parse_delta_spec(bad)


def test_cli_floquet_table(tmp_path, capsys):
    rc = cli.main(["floquet-table", "--a", "0", "--q", "0.4", "--nmax", "5",
                   "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "omega_s = 0.2925662115" in out
    assert (tmp_path / "floquet.json").is_file()
    lines = (tmp_path / "matrix_table.csv").read_text().splitlines()
    assert len(lines) - 1 == 2 * 6


def test_cli_run_quantum_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(tiny_config_doc()))
    out = tmp_path / "out"
    rc = cli.main(["run", str(cfg), "--out", str(out)])
    assert rc == 0
    assert (out / "moments_quantum.csv").is_file()
    assert "window dx" in capsys.readouterr().out


def test_cli_sweep_overrides_delta_list(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(tiny_config_doc()))
    out = tmp_path / "out"
    rc = cli.main(["sweep", str(cfg), "--delta", "0.5,0.7", "--out", str(out)])
    assert rc == 0
    rows = io.read_sweep_csv(out / "sweep.csv")
    assert [r["delta"] for r in rows] == [0.5, 0.7]


def test_cli_seed_override_changes_classical_draws(tmp_path):
    cfg = tmp_path / "cfg.json"
    doc = tiny_config_doc()
    doc["experiment"]["type"] = "classical"
    cfg.write_text(json.dumps(doc))
    d1, d2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", str(cfg), "--out", str(d1), "--seed", "1"]) == 0
    assert cli.main(["run", str(cfg), "--out", str(d2), "--seed", "2"]) == 0
    assert (d1 / "moments_classical.csv").read_bytes() != \
           (d2 / "moments_classical.csv").read_bytes()


def test_cli_error_paths(tmp_path, capsys):
    assert cli.main(["preset", "fig9", "--out", str(tmp_path)]) == 2
    assert "unknown preset" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", str(bad)]) == 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(tiny_config_doc()))
    assert cli.main(["sweep", str(cfg), "--delta", "junk", "--out", str(tmp_path)]) == 2


def test_cli_boundary_leak_exits_nonzero(tmp_path, capsys):
    doc = tiny_config_doc(n_grid=512, x_max=10.0, t_end=80.0, stride=10.0,
                          window=(60.0, 80.0))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(doc))
    rc = cli.main(["run", str(cfg), "--out", str(tmp_path / "out")])
    assert rc == 1
    assert "boundary occupancy" in capsys.readouterr().err
