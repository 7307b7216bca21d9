"""Config validation, output schemas, exit codes, and byte determinism."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest

from symbreak import cli, experiments as exp, model
from symbreak.errors import InvalidSpecError


def write_config(tmp_path: Path, payload: dict, name: str = "config.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


SMALL_TORUS = {
    "model": "torus",
    "lx": 4,
    "ly": 4,
    "g": 0.1,
    "seed": 5,
    "time_grid": {"kind": "linear", "start": 0.0, "stop": 3.0, "dt": 0.5},
}

SMALL_CONNECTED = {
    "model": "connected",
    "n_sites": 6,
    "m": 2,
    "mode": "single_particle",
    "g": 0.2,
    "k": 1.0,
    "seed": 1,
    "time_grid": {"kind": "linear", "start": 0.0, "stop": 20.0, "dt": 1.0},
}


# ---------------------------------------------------------------------------
# validate_config
# ---------------------------------------------------------------------------


def test_validate_config_fills_connected_defaults(tmp_path):
    spec = cli.validate_config(write_config(tmp_path, {"model": "connected"}))
    cfg = spec.quench
    assert cfg.n_sites == 12
    assert cfg.m == 2
    assert cfg.mode == "many_body"
    assert cfg.n_particles == 3
    assert cfg.k == 1.0
    assert cfg.g == 0.0
    assert cfg.seed == 0
    grid = cfg.time_grid.times()
    assert grid.size == 1000
    assert grid[0] == pytest.approx(0.1)
    assert grid[-1] == pytest.approx(1e4)


def test_validate_config_fills_planar_defaults(tmp_path):
    spec = cli.validate_config(write_config(tmp_path, {"model": "torus"}))
    cfg = spec.quench
    assert cfg.lx == 10 and cfg.ly == 10
    grid = cfg.time_grid.times()
    assert grid[0] == 0.0
    assert grid[-1] == pytest.approx(2000.0)
    assert grid[1] - grid[0] == pytest.approx(0.5)


def test_validate_config_single_particle_skips_filling_default(tmp_path):
    spec = cli.validate_config(
        write_config(tmp_path, {"model": "connected", "mode": "single_particle"})
    )
    assert spec.quench.n_particles is None


def test_validate_config_rejects_unknown_key(tmp_path):
    path = write_config(tmp_path, {"model": "torus", "bogus": 1})
    with pytest.raises(InvalidSpecError, match="bogus"):
        cli.validate_config(path)


def test_validate_config_rejects_unknown_tg_key(tmp_path):
    path = write_config(tmp_path, {"model": "torus", "tg": {"thresold": 0.4}})
    with pytest.raises(InvalidSpecError, match="thresold"):
        cli.validate_config(path)


def test_validate_config_rejects_oversized_coupled_subset(tmp_path):
    path = write_config(tmp_path, {"model": "connected", "n_sites": 4, "m": 9})
    with pytest.raises(InvalidSpecError, match="m="):
        cli.validate_config(path)


def test_validate_config_rejects_out_of_range_threshold(tmp_path):
    path = write_config(tmp_path, {"model": "torus", "tg": {"threshold": 1.5}})
    with pytest.raises(InvalidSpecError, match="threshold"):
        cli.validate_config(path)


def test_validate_config_rejects_planar_keys_on_connected(tmp_path):
    path = write_config(tmp_path, {"model": "connected", "lx": 4})
    with pytest.raises(InvalidSpecError, match="lx"):
        cli.validate_config(path)


def test_validate_config_rejects_connected_keys_on_planar(tmp_path):
    path = write_config(tmp_path, {"model": "strip", "n_sites": 8})
    with pytest.raises(InvalidSpecError, match="n_sites"):
        cli.validate_config(path)


def test_validate_config_rejects_bad_json_and_missing_file(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(InvalidSpecError, match="JSON"):
        cli.validate_config(broken)
    with pytest.raises(InvalidSpecError, match="does not exist"):
        cli.validate_config(tmp_path / "absent.json")


def test_validate_config_time_grid_errors(tmp_path):
    path = write_config(
        tmp_path, {"model": "torus", "time_grid": {"kind": "quadratic"}}
    )
    with pytest.raises(InvalidSpecError, match="quadratic"):
        cli.validate_config(path)
    path = write_config(
        tmp_path,
        {"model": "torus", "time_grid": {"kind": "linear", "start": 0, "stop": 5}},
    )
    with pytest.raises(InvalidSpecError, match="dt"):
        cli.validate_config(path)


def test_validate_config_sweep_section(tmp_path):
    path = write_config(
        tmp_path, {"model": "torus", "sweep": {"param": "q", "grid": [1.0]}}
    )
    with pytest.raises(InvalidSpecError, match="param"):
        cli.validate_config(path)
    path = write_config(tmp_path, {"model": "torus", "sweep": {"grid": []}})
    with pytest.raises(InvalidSpecError, match="grid"):
        cli.validate_config(path)
    spec = cli.validate_config(
        write_config(tmp_path, {"model": "torus", "sweep": {"grid": [0.1, 0.2]}})
    )
    assert spec.sweep == {"param": "g", "grid": [0.1, 0.2]}


def test_validate_config_windows_section(tmp_path):
    path = write_config(
        tmp_path, {"model": "torus", "windows": {"early": [0.0, 5.0]}}
    )
    with pytest.raises(InvalidSpecError, match="late"):
        cli.validate_config(path)
    path = write_config(
        tmp_path,
        {"model": "torus", "windows": {"early": [5.0, 1.0], "late": [9.0, 10.0]}},
    )
    with pytest.raises(InvalidSpecError, match="early"):
        cli.validate_config(path)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(3)
    values = np.concatenate(
        [rng.normal(size=10), [1e-300, 1e300, 1 / 3, math.pi, -0.0]]
    )
    path = tmp_path / "trip.csv"
    cli.write_csv(path, ["a", "b"], [[i, v] for i, v in enumerate(values)])
    header, data = cli.read_csv(path)
    assert header == ["a", "b"]
    assert np.array_equal(data[:, 1], values)
    assert "\r" not in path.read_text()


def test_read_csv_rejects_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(InvalidSpecError, match="empty"):
        cli.read_csv(path)


# ---------------------------------------------------------------------------
# subcommand runs
# ---------------------------------------------------------------------------


def run_cli(*argv: str) -> int:
    return cli.main(list(argv))


def manifest_of(out_dir: Path) -> dict:
    return json.loads((out_dir / "manifest.json").read_text())


def test_quench_torus_schema_and_manifest(tmp_path):
    cfg = write_config(tmp_path, SMALL_TORUS)
    out = tmp_path / "run"
    assert run_cli("quench-torus", "--config", str(cfg), "--out", str(out)) == 0
    header, data = cli.read_csv(out / "timeseries.csv")
    assert header == ["t", "trace_distance", "vn_entropy", "bath_corr"]
    assert data.shape == (7, 4)
    assert data[0, 1] == pytest.approx(1.0, abs=1e-9)
    manifest = manifest_of(out)
    assert manifest["subcommand"] == "quench-torus"
    assert manifest["config"]["g"] == 0.1
    assert manifest["version"]
    assert manifest["started"] <= manifest["finished"]


def test_manifest_lists_every_output_exactly(tmp_path):
    cfg = write_config(tmp_path, SMALL_CONNECTED)
    out = tmp_path / "run"
    assert run_cli("quench-connected", "--config", str(cfg), "--out", str(out)) == 0
    listed = set(manifest_of(out)["outputs"])
    on_disk = {p.name for p in out.iterdir()}
    assert on_disk == listed | {"manifest.json"}
    assert sum(1 for name in on_disk if name == "manifest.json") == 1


def test_same_seed_twice_gives_identical_bytes(tmp_path):
    cfg = write_config(tmp_path, SMALL_TORUS)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run_cli("quench-torus", "--config", str(cfg), "--out", str(out_a)) == 0
    assert run_cli("quench-torus", "--config", str(cfg), "--out", str(out_b)) == 0
    assert (out_a / "timeseries.csv").read_bytes() == (
        out_b / "timeseries.csv"
    ).read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path, SMALL_TORUS)
    out = tmp_path / "run"
    assert run_cli(
        "quench-torus", "--config", str(cfg), "--out", str(out), "--seed", "99"
    ) == 0
    manifest = manifest_of(out)
    assert manifest["seed"] == 99
    assert manifest["config"]["seed"] == 99


def test_quench_model_mismatch_is_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL_TORUS)
    out = tmp_path / "run"
    assert run_cli("quench-connected", "--config", str(cfg), "--out", str(out)) == 1
    assert "model" in capsys.readouterr().err


def test_spectrum_sweep_matches_direct_diagonalization(tmp_path):
    grid = [1e-4, 1e-3, 1e-2]
    payload = {
        "model": "connected",
        "n_sites": 8,
        "m": 2,
        "mode": "single_particle",
        "k": 1.0,
        "seed": 3,
        "sweep": {"param": "g", "grid": grid},
    }
    cfg = write_config(tmp_path, payload)
    out = tmp_path / "run"
    assert run_cli("spectrum-sweep", "--config", str(cfg), "--out", str(out)) == 0
    header, data = cli.read_csv(out / "spectrum.csv")
    assert header[0] == "g"
    assert header[1] == "level_00" and len(header) == 17
    lattice = model.LatticeSpec.fully_connected(8, 2)
    r = model.sample_symmetric_uniform(8, exp.derive_seed(3, 1))
    r_prime = model.sample_symmetric_uniform(2, exp.derive_seed(3, 2))
    for row, g in zip(data, grid):
        pair = model.build_connected_hamiltonian(
            lattice,
            model.SymBreakTerm(r, g),
            model.CouplingTerm(r_prime, 1.0),
            mode="single_particle",
        )
        expected = np.linalg.eigvalsh(pair.post_quench)
        np.testing.assert_allclose(row[1:], expected, atol=1e-12)


def test_spectrum_sweep_planar_rejects_k(tmp_path, capsys):
    payload = dict(SMALL_TORUS)
    payload["sweep"] = {"param": "k", "grid": [0.1, 0.2]}
    cfg = write_config(tmp_path, payload)
    assert run_cli(
        "spectrum-sweep", "--config", str(cfg), "--out", str(tmp_path / "run")
    ) == 1
    assert "param" in capsys.readouterr().err


def test_spectrum_sweep_requires_section(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL_TORUS)
    assert run_cli(
        "spectrum-sweep", "--config", str(cfg), "--out", str(tmp_path / "run")
    ) == 1
    assert "sweep" in capsys.readouterr().err


def test_tg_scaling_outputs(tmp_path):
    payload = {
        "model": "connected",
        "n_sites": 6,
        "m": 2,
        "mode": "single_particle",
        "g": 1.0,
        "k": 1.0,
        "seed": 7,
        "scaling": {"param": "k", "grid": [0.5, 1.0], "horizon_scale": 20},
    }
    cfg = write_config(tmp_path, payload)
    out = tmp_path / "run"
    assert run_cli(
        "tg-scaling", "--config", str(cfg), "--out", str(out), "--realizations", "4"
    ) == 0
    header, data = cli.read_csv(out / "scaling.csv")
    assert header == ["param", "tg_median", "tg_mean", "n_censored", "n_total"]
    assert data.shape == (2, 5)
    assert list(data[:, 0]) == [0.5, 1.0]
    assert np.all(data[:, 4] == 4)
    fit = json.loads((out / "fit.json").read_text())
    assert set(fit) == {"slope", "intercept", "r2"}
    manifest = manifest_of(out)
    assert manifest["n_realizations"] == 4
    assert len(manifest["censoring"]) == 2
    assert manifest["point_master_seeds"] == [
        exp.derive_seed(7, 10_000),
        exp.derive_seed(7, 10_001),
    ]


def test_ensemble_outputs_and_seed_column(tmp_path):
    cfg = write_config(tmp_path, SMALL_CONNECTED)
    out = tmp_path / "run"
    assert run_cli(
        "ensemble", "--config", str(cfg), "--out", str(out), "--realizations", "3"
    ) == 0
    header, data = cli.read_csv(out / "ensemble.csv")
    assert header == ["t", "mean_trace_distance", "d000", "d001", "d002"]
    np.testing.assert_allclose(data[:, 1], data[:, 2:].mean(axis=1), atol=1e-15)
    lines = (out / "tg.csv").read_text().splitlines()
    assert lines[0] == "realization,seed,tg,censored,flag"
    seeds = [int(line.split(",")[1]) for line in lines[1:]]
    assert seeds == [exp.derive_seed(1, i) for i in range(3)]


def test_ensemble_worker_count_does_not_change_bytes(tmp_path):
    cfg = write_config(tmp_path, SMALL_CONNECTED)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out, workers in ((out_a, "1"), (out_b, "2")):
        assert run_cli(
            "ensemble",
            "--config",
            str(cfg),
            "--out",
            str(out),
            "--realizations",
            "4",
            "--workers",
            workers,
        ) == 0
    assert (out_a / "ensemble.csv").read_bytes() == (out_b / "ensemble.csv").read_bytes()
    assert (out_a / "tg.csv").read_bytes() == (out_b / "tg.csv").read_bytes()


def test_angle_scan_minimum_at_orthogonal_preparation(tmp_path):
    payload = {
        "model": "connected",
        "n_sites": 8,
        "m": 3,
        "mode": "single_particle",
        "g": 0.05,
        "k": 0.8,
        "seed": 11,
        "angles": {"num": 5},
    }
    cfg = write_config(tmp_path, payload)
    out = tmp_path / "run"
    assert run_cli("angle-scan", "--config", str(cfg), "--out", str(out)) == 0
    header, data = cli.read_csv(out / "anglescan.csv")
    assert header == ["theta", "dephased_estimate"]
    assert data.shape == (5, 2)
    assert data[-1, 0] == pytest.approx(math.pi)
    assert np.argmin(data[:, 1]) == 2
    assert data[0, 1] == pytest.approx(data[-1, 1], abs=1e-9)


def test_angle_scan_rejects_planar_model(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL_TORUS)
    assert run_cli(
        "angle-scan", "--config", str(cfg), "--out", str(tmp_path / "run")
    ) == 1
    assert "connected" in capsys.readouterr().err


def test_nm_windows_outputs(tmp_path):
    payload = dict(SMALL_TORUS)
    payload["g"] = 0.001
    payload["windows"] = {"early": [0.0, 5.0], "late": [100.0, 105.0], "dt": 1.0}
    cfg = write_config(tmp_path, payload)
    out = tmp_path / "run"
    assert run_cli(
        "nm-windows", "--config", str(cfg), "--out", str(out), "--realizations", "2"
    ) == 0
    lines = (out / "nmwindows.csv").read_text().splitlines()
    assert lines[0] == "window,t_start,t_stop,mean_of_measure,measure_of_mean"
    assert lines[1].startswith("early,0,5,")
    assert lines[2].startswith("late,100,105,")
    early = lines[1].split(",")
    assert float(early[3]) == pytest.approx(float(early[4]), abs=1e-9)


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------


def test_unknown_key_exits_one_with_named_field(tmp_path, capsys):
    cfg = write_config(tmp_path, {"model": "torus", "bogus": 1})
    assert run_cli("quench-torus", "--config", str(cfg), "--out", str(tmp_path / "r")) == 1
    err = capsys.readouterr().err
    assert "config error" in err and "bogus" in err


def test_missing_required_flag_exits_one(capsys):
    assert run_cli("quench-torus", "--out", "somewhere") == 1
    assert "--config" in capsys.readouterr().err


def test_unknown_subcommand_exits_one(capsys):
    assert run_cli("frobnicate", "--config", "x", "--out", "y") == 1
    assert "config error" in capsys.readouterr().err


def test_dimension_cap_exits_three(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SYMBREAK_MAX_DIM", "100")
    payload = {
        "model": "connected",
        "time_grid": {"kind": "linear", "start": 0.0, "stop": 2.0, "dt": 0.5},
    }
    cfg = write_config(tmp_path, payload)
    assert run_cli(
        "quench-connected", "--config", str(cfg), "--out", str(tmp_path / "r")
    ) == 3
    assert "resource limit" in capsys.readouterr().err
