"""Serialization: schema headers, round trips, byte-stable output."""

import json

import numpy as np
import pytest

from dynloc import __version__, io
from dynloc.floquet import build_matrix_element_table, solve_mathieu
from dynloc.gridstate import Distribution, MomentSummary
from dynloc.mcwf import JumpEvent, RunRecord


def sample_moments(n=5, seed=3):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        x, p = rng.normal(), rng.normal()
        dx, dp = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)
        pe = rng.uniform(0.0, 1.0)
        out.append(MomentSummary(t=0.5 * k, x_mean=x, x2_mean=dx**2 + x**2,
                                 dx_width=dx, p_mean=p, p2_mean=dp**2 + p**2,
                                 dp_width=dp, pop_g=1.0 - pe, pop_e=pe,
                                 norm2=1.0))
    return out


def test_moments_csv_header_and_roundtrip(tmp_path):
    rows = sample_moments()
    path = io.write_moments_csv(tmp_path / "m.csv", rows)
    text = path.read_text().splitlines()
    assert text[0] == "t,dx,dp,x_mean,p_mean,pop_e,norm2"
    assert len(text) == 1 + len(rows)
    back = io.read_moments_csv(path)
    for a, b in zip(back, rows):
        assert a.t == b.t and a.x_mean == b.x_mean  # repr round-trips exactly
        assert a.dx_width == b.dx_width and a.dp_width == b.dp_width
        assert a.pop_e == b.pop_e and a.norm2 == b.norm2


def test_moments_csv_tag_column(tmp_path):
    path = io.write_moments_csv(tmp_path / "m.csv", sample_moments(2), tag="classical")
    lines = path.read_text().splitlines()
    assert lines[0] == "t,dx,dp,x_mean,p_mean,pop_e,norm2,tag"
    assert all(line.endswith(",classical") for line in lines[1:])


def test_distribution_csv_roundtrip(tmp_path):
    x = np.linspace(-3.0, 3.0, 41)
    g = np.exp(-x**2)
    g /= np.sum(g) * (x[1] - x[0]) * 2.0
    dist = Distribution(abscissa=x, p_g=g, p_e=g.copy(), p_total=2.0 * g,
                        spacing=float(x[1] - x[0]), kind="position",
                        normalized=True)
    path = io.write_distribution_csv(tmp_path / "d.csv", dist)
    assert path.read_text().splitlines()[0] == "abscissa,P_g,P_e,P"
    back = io.read_distribution_csv(path, kind="position")
    assert np.array_equal(back.abscissa, x)
    assert np.array_equal(back.p_total, 2.0 * g)
    assert back.integral() == pytest.approx(dist.integral())
    tagged = io.write_distribution_csv(tmp_path / "dt.csv", dist, tag="quantum")
    assert tagged.read_text().splitlines()[0] == "abscissa,P_g,P_e,P,tag"


def test_matrix_table_csv_schema(tmp_path):
    sol = solve_mathieu(0.0, 0.4, kbar=0.29)
    table = build_matrix_element_table(sol, omega0=2.24, n_values=range(3),
                                       k_values=(1,), l_values=(0, 1))
    path = io.write_matrix_table_csv(tmp_path / "w.csv", table)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,k,l,re,im,abs"
    assert len(lines) == 1 + len(table.entries)
    first = lines[1].split(",")
    n, k, l = int(first[0]), int(first[1]), int(first[2])
    v = table.entries[(n, k, l)]
    assert float(first[3]) == v.real and float(first[4]) == v.imag
    assert float(first[5]) == abs(v)
    keys = [tuple(int(s) for s in line.split(",")[:3]) for line in lines[1:]]
    assert keys == sorted(keys)


def test_floquet_json_fields(tmp_path):
    sol = solve_mathieu(0.0, 0.4, kbar=0.29)
    path = io.write_floquet_json(tmp_path / "f.json", sol)
    data = json.loads(path.read_text())
    assert data["omega_s"] == sol.omega_s
    assert data["omega_r"] == sol.omega_r
    assert data["eta"] == sol.eta
    assert np.allclose(np.array(data["phi_re"]), sol.phi.real)


def test_records_json(tmp_path):
    rec = RunRecord(run_index=2, master_seed=99,
                    jumps=(JumpEvent(t=1.0, p_recoil=0.1, pop_e_before=0.4),
                           JumpEvent(t=2.5, p_recoil=-0.05, pop_e_before=0.6)),
                    moments=[])
    path = io.write_records_json(tmp_path / "r.json", [rec])
    data = json.loads(path.read_text())
    assert data[0]["run_index"] == 2 and data[0]["master_seed"] == 99
    assert data[0]["jumps"][1] == {"t": 2.5, "p_recoil": -0.05, "pop_e_before": 0.6}


def test_run_moments_csv_groups_by_run(tmp_path):
    recs = [RunRecord(run_index=i, master_seed=7, jumps=(),
                      moments=sample_moments(3, seed=i)) for i in range(2)]
    path = io.write_run_moments_csv(tmp_path / "runs.csv", recs)
    lines = path.read_text().splitlines()
    assert lines[0] == "run,t,dx,dp,x_mean,p_mean,pop_e,norm2"
    assert len(lines) == 1 + 6
    assert [line.split(",")[0] for line in lines[1:]] == ["0"] * 3 + ["1"] * 3


def test_sweep_csv_roundtrip(tmp_path):
    rows = [dict(zip(io.SWEEP_COLUMNS, np.linspace(0.1, 0.9, 9) * (j + 1)))
            for j in range(3)]
    path = io.write_sweep_csv(tmp_path / "s.csv", rows)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(io.SWEEP_COLUMNS)
    assert len(lines) == 4
    back = io.read_sweep_csv(path)
    assert back == rows


def test_manifest_embeds_config_and_version(tmp_path):
    cfg = {"trap": {"a": 0.0, "q": 0.4}, "numerics": {"seed": 7}}
    path = io.write_manifest(tmp_path / "manifest.json", cfg, outputs=["m.csv"])
    data = json.loads(path.read_text())
    assert data["version"] == __version__
    assert data["config"] == cfg
    assert data["outputs"] == ["m.csv"]
    assert not any("time" in k or "date" in k for k in data)


def test_outputs_are_byte_identical_on_rewrite(tmp_path):
    rows = sample_moments(4, seed=11)
    p1 = io.write_moments_csv(tmp_path / "a.csv", rows)
    p2 = io.write_moments_csv(tmp_path / "b.csv", rows)
    assert p1.read_bytes() == p2.read_bytes()
    m1 = io.write_manifest(tmp_path / "m1.json", {"x": 1.0 / 3.0})
    m2 = io.write_manifest(tmp_path / "m2.json", {"x": 1.0 / 3.0})
    assert m1.read_bytes() == m2.read_bytes()


def test_window_stats_average_and_error():
    rows = sample_moments(11)
    stats = io.window_stats(rows, (1.0, 4.0))
    sel = [m for m in rows if 1.0 <= m.t <= 4.0]
    dx = np.array([m.dx_width for m in sel])
    assert stats["n_samples"] == len(sel)
    assert stats["dx"] == pytest.approx(dx.mean())
    assert stats["dx_err"] == pytest.approx(dx.std(ddof=1) / np.sqrt(dx.size))
    with pytest.raises(ValueError, match="window"):
        io.window_stats(rows, (100.0, 200.0))
