import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from sshbraid.errors import ConfigError
from sshbraid.runner import ExperimentConfig, build_config, main
from sshbraid.runner.config import load_config_file, parse_phase, parse_t_grid
from sshbraid.runner.emit import csv_text, format_value, Table
from sshbraid.runner.experiments import scan_point, worker_count
from sshbraid.model import ModelParams


def cli(*argv):
    return subprocess.run(
        [sys.executable, "-m", "sshbraid", *argv], capture_output=True, text=True, timeout=600
    )


def test_presets():
    c = build_config("transport")
    assert (c.chains, c.period, c.initial) == ("triple", 2663.0, "B:left")
    assert build_config("hom").period == 2220.0
    assert build_config("scan-adiabatic").period is None


def test_layering_file_then_flags(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text('L = 10\ntarget_phase = "2pi"\ncoupling = 0.15\n')
    vals = load_config_file(f)
    c = build_config("transfer", vals)
    assert c.L == 10 and c.period is None and c.target_phase == pytest.approx(2 * math.pi)
    c = build_config("transfer", vals, {"period": 900.0, "L": 12})
    assert c.L == 12 and c.period == 900.0 and c.target_phase is None and c.coupling == 0.15


def test_config_file_errors(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("period = 100.0\ntarget_phase = 3.0\n")
    with pytest.raises(ConfigError):
        build_config("transfer", load_config_file(f))
    f.write_text("perod = 100.0\n")
    with pytest.raises(ConfigError, match="perod"):
        load_config_file(f)
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "missing.toml")
    with pytest.raises(ConfigError):
        build_config("braid", {"experiment": "hom"})


@pytest.mark.parametrize(
    "experiment,kw",
    [
        ("scan-adiabatic", {"period": 100.0}),
        ("transfer", {"steps": 7}),
        ("transfer", {"grid_size": 100}),
        ("transfer", {"initial": "C:left"}),
        ("transport", {"initial": "B:middle"}),
        ("hom", {"initial": "B:left"}),
        ("braid", {"format": "xml"}),
        ("braid", {"symmetry": "guess"}),
    ],
)
def test_invalid_configs(experiment, kw):
    with pytest.raises(ConfigError):
        build_config(experiment, None, kw)


def test_parse_phase():
    assert parse_phase("1.5pi") == pytest.approx(1.5 * math.pi)
    assert parse_phase("pi") == pytest.approx(math.pi)
    assert parse_phase("2.5") == 2.5
    assert parse_phase(3) == 3.0
    with pytest.raises(ConfigError):
        parse_phase("lots")


def test_parse_t_grid():
    g = parse_t_grid("10:3000:40log")
    np.testing.assert_allclose(g, np.geomspace(10, 3000, 40))
    np.testing.assert_allclose(parse_t_grid("10:20:3lin"), [10, 15, 20])
    np.testing.assert_allclose(parse_t_grid("5,7.5"), [5, 7.5])
    for bad in ("3000:10:4", "a,b", "", "-5,3"):
        with pytest.raises(ConfigError):
            parse_t_grid(bad)


def test_worker_count(monkeypatch):
    monkeypatch.delenv("SSHBRAID_WORKERS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("SSHBRAID_WORKERS", "3")
    assert worker_count() == 3
    assert worker_count(2) == 2
    monkeypatch.setenv("SSHBRAID_WORKERS", "many")
    with pytest.raises(ConfigError):
        worker_count()


def test_csv_formatting_round_trips_floats():
    x = 0.1 + 0.2
    assert float(format_value(x)) == x
    assert format_value(None) == "" and format_value(3) == "3"
    text = csv_text(Table(["a", "b"], [(1, x)]))
    assert text == f"a,b\n1,{x!r}\n"


def test_cli_bad_flags_exit_2(capsys):
    assert main(["transfer", "--steps", "7"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and err["exit_code"] == 2
    assert main(["transfer", "--period", "10", "--target-phase", "1pi"]) == 2
    assert main(["nonsense"]) == 2
    assert main(["transfer", "--from", "Z:left"]) == 2


def test_cli_convergence_failure_exit_3(capsys):
    assert main(["transfer", "--period", "2000", "--steps", "399"]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConvergenceError" and err["defect"] > 1e-8


def test_cli_printed_triple_symmetry_exit_4(capsys):
    assert main(["braid", "--model", "triple", "--symmetry", "printed"]) == 4
    err = json.loads(capsys.readouterr().err)
    assert err["defect"]["unitarity"] == pytest.approx(8 / 9)


def test_cli_unwritable_output_exit_1(capsys, tmp_path):
    target = str(tmp_path / "no" / "such" / "x.csv")
    assert main(["spectrum", "-o", target]) == 1
    err = json.loads(capsys.readouterr().err)
    assert target in err["message"]


def test_braid_csv_and_summary(tmp_path, capsys):
    out = tmp_path / "br.csv"
    assert main(["braid", "--model", "triple", "-o", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["braid_word"] == "t1^-1 t2^-1"
    assert summary["permutation"] == {"I": "III", "II": "I", "III": "II"}
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "branch", "parity", "E", "re_S", "im_S"]
    assert len(rows) == 1 + 401 * 6


def test_json_manifest_round_trips_config(tmp_path, capsys):
    out = tmp_path / "sp.json"
    assert main(["spectrum", "--L", "10", "--format", "json", "-o", str(out)]) == 0
    capsys.readouterr()
    m = json.loads(out.read_text())
    config = build_config("spectrum", None, {"L": 10, "format": "json", "output": str(out)})
    assert ExperimentConfig(**m["config"]) == config
    assert set(m["versions"]) >= {"numpy", "scipy", "python", "sshbraid"}
    assert m["summary"]["max_splitting_spread"] < 1e-10


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        r = cli("spectrum", "-o", str(path))
        assert r.returncode == 0, r.stderr
    assert a.read_bytes() == b.read_bytes()


def test_scan_point_at_preset_period():
    pt = scan_point(ModelParams(period=1332.0))
    assert pt["p"] == pytest.approx(1, abs=1e-10)
    assert pt["projections"][0] > 0.99
    assert pt["norm_drift"] < 1e-10


def test_scan_parallel_matches_serial(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["scan-adiabatic", "--T-grid", "20,60", "-o", str(a), "--workers", "1"]) == 0
    assert main(["scan-adiabatic", "--T-grid", "20,60", "-o", str(b), "--workers", "2"]) == 0
    capsys.readouterr()
    assert a.read_bytes() == b.read_bytes()


def test_transfer_cli(tmp_path, capsys):
    out = tmp_path / "tr.csv"
    assert main(["transfer", "-o", str(out)]) == 0
    s = json.loads(capsys.readouterr().out)
    assert s["fidelity"] >= 0.99
    assert s["norm_drift"] < 1e-10
    assert len(s["outputs"]) == 1
