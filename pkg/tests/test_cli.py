"""Config parsing, artifact output, caching, determinism, CLI surface."""

import hashlib
import json
import logging
import math

import pytest

from qshsim.cli import main
from qshsim.config import normalize, parse_config
from qshsim.errors import ConfigError, QshError
from qshsim.runner import LOCK_NAME, run


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_parse_minimal_bands_config(tmp_path):
    path = write_config(
        tmp_path,
        {"alpha": "1/3", "beta": 0, "lambda": 0, "task": "bands", "grid": [16, 16]},
    )
    cfg = parse_config(path)
    assert cfg.task == "bands"
    assert cfg.task_params["grid"] == [16, 16]
    # shared defaults filled
    assert cfg.task_params["e_f"] == 1.5
    assert cfg.task_params["gap_threshold"] == 0.05
    assert cfg.task_params["ring_depth"] == 2
    assert cfg.task_params["t0_mhz"] == 3.0
    assert cfg.model.p == 1 and cfg.model.q == 3


def test_parse_alpha_normalized_with_warning(tmp_path, caplog):
    path = write_config(tmp_path, {"alpha": "2/4", "task": "bands", "grid": [16, 16]})
    with caplog.at_level(logging.WARNING, logger="qshsim"):
        cfg = parse_config(path)
    assert (cfg.model.p, cfg.model.q) == (1, 2)
    assert any("lowest terms" in m for m in caplog.messages)


def test_parse_rejects_bad_configs(tmp_path):
    with pytest.raises(ConfigError, match="two|2 task blocks|task blocks"):
        normalize({"alpha": "1/3", "bands": {}, "ribbon": {}})
    with pytest.raises(ConfigError, match="alpha"):
        normalize({"task": "bands"})
    with pytest.raises(ConfigError, match="alpha"):
        normalize({"alpha": 0.333, "task": "bands"})
    with pytest.raises(ConfigError, match="task"):
        normalize({"alpha": "1/3"})
    with pytest.raises(ConfigError, match="unknown task"):
        normalize({"alpha": "1/3", "task": "frobnicate"})
    bad = tmp_path / "bad.json"
    bad.write_text('{"alpha": "1/3",}')
    with pytest.raises(ConfigError, match="line 1"):
        parse_config(str(bad))
    with pytest.raises(ConfigError, match="not found"):
        parse_config(str(tmp_path / "missing.json"))


def test_cache_key_stable_under_key_order():
    a = normalize({"alpha": "1/3", "task": "bands", "grid": [16, 16], "beta": 0.0})
    b = normalize({"beta": 0.0, "grid": [16, 16], "task": "bands", "alpha": "1/3"})
    assert a.cache_key() == b.cache_key()


BANDS_CFG = {"alpha": "1/3", "task": "bands", "grid": [16, 16]}


def test_run_bands_and_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("QSH_CACHE_DIR", str(tmp_path / "cache"))
    cfg = normalize(BANDS_CFG)
    cfg.out_dir = str(tmp_path / "out1")
    m1 = run(cfg)
    assert not m1["cached"]
    assert [o["name"] for o in m1["outputs"]] == ["bands.csv"]
    data1 = (tmp_path / "out1" / "bands.csv").read_bytes()

    cfg2 = normalize(BANDS_CFG)
    cfg2.out_dir = str(tmp_path / "out2")
    m2 = run(cfg2)
    assert m2["cached"]
    data2 = (tmp_path / "out2" / "bands.csv").read_bytes()
    assert hashlib.sha256(data1).hexdigest() == hashlib.sha256(data2).hexdigest()

    m3 = run(cfg2, force=True)
    assert not m3["cached"]
    data3 = (tmp_path / "out2" / "bands.csv").read_bytes()
    assert data3 == data1  # determinism: recomputation reproduces the bytes

    # manifest lists every output with its content hash
    manifest = json.loads((tmp_path / "out2" / "run_manifest.json").read_text())
    for entry in manifest["outputs"]:
        digest = hashlib.sha256(
            (tmp_path / "out2" / entry["name"]).read_bytes()
        ).hexdigest()
        assert digest == entry["sha256"]


def test_lock_excludes_concurrent_runs(tmp_path, monkeypatch):
    monkeypatch.setenv("QSH_CACHE_DIR", str(tmp_path / "cache"))
    out = tmp_path / "out"
    out.mkdir()
    (out / LOCK_NAME).touch()
    cfg = normalize(BANDS_CFG)
    cfg.out_dir = str(out)
    with pytest.raises(QshError, match="locked"):
        run(cfg)


def test_tones_task_units(tmp_path, monkeypatch):
    monkeypatch.setenv("QSH_CACHE_DIR", str(tmp_path / "cache"))
    cfg = normalize({"alpha": "1/3", "beta": 0.1, "tones": {}})
    cfg.out_dir = str(tmp_path / "t0")
    run(cfg)
    lines = (tmp_path / "t0" / "tones.csv").read_text().splitlines()
    assert lines[0] == "bond,channel,freq_t0,amplitude_t0,phase_rad,sign"
    assert len(lines) == 1 + 12  # 2 tones on each x bond, 4 on each y bond
    freqs = {float(l.split(",")[2]) for l in lines[1:]}
    assert 50.0 in freqs

    cfg_mhz = normalize({"alpha": "1/3", "beta": 0.1, "tones": {"units": "MHz"}})
    cfg_mhz.out_dir = str(tmp_path / "mhz")
    run(cfg_mhz)
    mhz_lines = (tmp_path / "mhz" / "tones.csv").read_text().splitlines()
    assert mhz_lines[0] == "bond,channel,freq_MHz,amplitude_MHz,phase_rad,sign"
    mhz_freqs = {float(l.split(",")[2]) for l in mhz_lines[1:]}
    assert 150.0 in mhz_freqs  # 50 t0 * 3 MHz


def test_edge_states_task_density_output(tmp_path, monkeypatch):
    monkeypatch.setenv("QSH_CACHE_DIR", str(tmp_path / "cache"))
    cfg = normalize(
        {"alpha": "1/3", "nx": 6, "ny": 6, "edge_states": {"count": 1}}
    )
    cfg.out_dir = str(tmp_path / "es")
    run(cfg)
    lines = (tmp_path / "es" / "density_000.csv").read_text().splitlines()
    assert lines[0] == "m,n,density"
    assert len(lines) == 1 + 36
    total = perim = 0.0
    for line in lines[1:]:
        m, n, d = line.split(",")
        m, n, d = int(m), int(n), float(d)
        assert 1 <= m <= 6 and 1 <= n <= 6
        total += d
        if m in (1, 6) or n in (1, 6):
            perim += d
    assert abs(total - 1.0) < 1e-9
    assert perim / total >= 0.80  # perimeter carries most of the state


def test_ribbon_task_outputs(tmp_path, monkeypatch):
    monkeypatch.setenv("QSH_CACHE_DIR", str(tmp_path / "cache"))
    cfg = normalize(
        {"alpha": "1/3", "lambda": 1.0, "ribbon": {"ny": 12, "kx_points": 102}}
    )
    cfg.out_dir = str(tmp_path / "rb")
    run(cfg)
    bands = (tmp_path / "rb" / "bands.csv").read_text().splitlines()
    loc = (tmp_path / "rb" / "localization.csv").read_text().splitlines()
    assert bands[0] == "kx,band_index,E_t0"
    assert loc[0] == "kx,band_index,edge_bottom,edge_top"
    assert len(bands) == len(loc) == 1 + 102 * 24
    w = [float(l.split(",")[2]) + float(l.split(",")[3]) for l in loc[1:]]
    assert all(0.0 <= x <= 1.0 + 1e-9 for x in w)


def test_phase_diagram_task_csv(tmp_path, monkeypatch):
    # light solver settings keep this an interface test; the physics of the
    # full window runs in tests/test_topology.py at production settings
    monkeypatch.setenv("QSH_CACHE_DIR", str(tmp_path / "cache"))
    cfg = normalize(
        {
            "alpha": "1/3",
            "phase_diagram": {
                "beta_range": [0.1, 0.15],
                "lambda_range": [0.8, 1.2],
                "resolution": [16, 16],
                "bulk_grid": [64, 64],
                "ny_ribbon": 24,
                "kx_points": 101,
            },
        }
    )
    cfg.out_dir = str(tmp_path / "pd")
    run(cfg)
    lines = (tmp_path / "pd" / "phase_map.csv").read_text().splitlines()
    assert lines[0] == "beta,lambda,phase,nu"
    assert len(lines) == 1 + 256
    phases = [l.split(",")[2] for l in lines[1:]]
    assert set(phases) <= {"topological", "metal", "trivial", "error"}
    # the scanned patch sits mostly in the metallic strip (light solver
    # settings blur the borders, so only a majority is asserted)
    metal_rows = [l for l in lines[1:] if l.split(",")[2] == "metal"]
    assert len(metal_rows) > 128
    assert all(l.split(",")[3] == "" for l in metal_rows)


def test_rwa_check_task(tmp_path, monkeypatch):
    monkeypatch.setenv("QSH_CACHE_DIR", str(tmp_path / "cache"))
    cfg = normalize({"alpha": "1/3", "rwa_check": {}})
    cfg.out_dir = str(tmp_path / "rwa")
    manifest = run(cfg)
    assert manifest["meta"]["fidelity"] >= 0.99
    assert manifest["meta"]["detuned_population_change"] < 0.01


def test_lindblad_task_csv(tmp_path, monkeypatch):
    monkeypatch.setenv("QSH_CACHE_DIR", str(tmp_path / "cache"))
    cfg = normalize(
        {
            "alpha": "1/3",
            "nx": 2,
            "ny": 2,
            "lindblad": {"gammas": [0.0, 0.05], "t_us": 0.2, "dt": 0.002},
        }
    )
    cfg.out_dir = str(tmp_path / "lb")
    manifest = run(cfg)
    lines = (tmp_path / "lb" / "decay_scan.csv").read_text().splitlines()
    assert lines[0] == "gamma_t0,gamma_kHz_over_2pi,P1,P2,P3"
    assert len(lines) == 3
    t_t0 = manifest["meta"]["T_t0"]
    assert math.isclose(t_t0, 2 * math.pi * 3.0 * 0.2)
    row = lines[2].split(",")
    assert math.isclose(float(row[4]), math.exp(-0.05 * t_t0), rel_tol=1e-3)


def test_json_format_output(tmp_path, monkeypatch):
    monkeypatch.setenv("QSH_CACHE_DIR", str(tmp_path / "cache"))
    cfg = normalize({"alpha": "1/3", "task": "bands", "grid": [16, 16],
                     "output": {"format": "json"}})
    cfg.out_dir = str(tmp_path / "j")
    run(cfg)
    records = json.loads((tmp_path / "j" / "bands.json").read_text())
    assert isinstance(records, list) and records
    assert set(records[0]) == {"kx", "ky", "band_index", "E_t0"}


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("QSH_CACHE_DIR", str(tmp_path / "cache"))
    cfg_path = write_config(tmp_path, BANDS_CFG)
    out = str(tmp_path / "cli_out")
    assert main(["bands", "--config", cfg_path, "--out", out]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["task"] == "bands" and summary["outputs"] == ["bands.csv"]

    # task/subcommand mismatch is a config error
    assert main(["ribbon", "--config", cfg_path, "--out", out]) == 2

    bad_path = write_config(tmp_path, {"alpha": "1/3"}, name="bad.json")
    assert main(["bands", "--config", bad_path, "--out", out]) == 2

    # held lock surfaces as a computation error
    locked = tmp_path / "locked"
    locked.mkdir()
    (locked / LOCK_NAME).touch()
    assert main(["bands", "--config", cfg_path, "--out", str(locked)]) == 3
