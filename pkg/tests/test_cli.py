import csv
import hashlib
import json

import pytest

from micropolar_sn.cli import fmt, main
from micropolar_sn.config import default_config_path

TINY = {"modes = 4": "modes = 2", "n_steps = 16": "n_steps = 4", "quad_points = 12": "quad_points = 4",
        "max_cell_width = 0.2": "max_cell_width = 0.5"}


@pytest.fixture
def tiny_config(tmp_path):
    text = default_config_path().read_text()
    for old, new in TINY.items():
        text = text.replace(old, new)
    path = tmp_path / "tiny.toml"
    path.write_text(text)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_number_format():
    assert fmt(0.1) == "1.0000000000000001e-01"
    assert fmt(3) == "3" and fmt(True) == "1" and fmt("x") == "x"


def test_simulate_zero_data_gives_zero_csv(tiny_config, tmp_path):
    assert main(["simulate", "--config", str(tiny_config), "--out", str(tmp_path / "o")]) == 0
    rows = _rows(tmp_path / "o" / "simulate" / "trajectory.csv")
    assert rows[0] == ["step", "time", "field", "k", "l", "value"]
    assert len(rows) == 1 + 5 * 2 * 4
    assert all(float(r[-1]) == 0.0 for r in rows[1:])


def test_manifest_lists_hashes(tiny_config, tmp_path):
    out = tmp_path / "o"
    assert main(["nash", "--config", str(tiny_config), "--out", str(out), "--directions", "8"]) == 0
    man = json.loads((out / "nash" / "manifest.json").read_text())
    assert set(man["files"]) == {"equilibrium.csv", "verification.csv"}
    for name, digest in man["files"].items():
        assert hashlib.sha256((out / "nash" / name).read_bytes()).hexdigest() == digest
    assert man["version"] and man["config_sha256"]


def test_leader_and_report(tiny_config, tmp_path):
    out = tmp_path / "o"
    assert main(["leader", "--config", str(tiny_config), "--out", str(out), "--eps", "0.05"]) == 0
    summary = dict((r[0], r[1]) for r in _rows(out / "leader" / "summary.csv")[1:])
    assert float(summary["eps"]) == 0.05
    assert float(summary["terminal_gap"]) <= 0.05 + float(summary["tol_disc"])
    history = _rows(out / "leader" / "history.csv")
    assert history[0] == ["iter", "theta", "grad_norm"]
    assert main(["norms", "--config", str(tiny_config), "--out", str(out)]) == 0
    assert main(["report", "--config", str(tiny_config), "--out", str(out)]) == 0
    stages = {r[0] for r in _rows(out / "report" / "report.csv")[1:]}
    assert stages == {"leader", "norms"}


def test_check_is_deterministic_on_tiny_config(tiny_config, tmp_path, capsys):
    for run in ("a", "b"):
        assert main(["check", "--config", str(tiny_config), "--out", str(tmp_path / run)]) == 0
    assert "PASS" in capsys.readouterr().out
    a = (tmp_path / "a" / "check" / "checks.csv").read_bytes()
    assert a == (tmp_path / "b" / "check" / "checks.csv").read_bytes()


def test_errors_give_nonzero_exit(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(default_config_path().read_text().replace("eps = 0.1", "epsilon = 0.1"))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "weights.epsilon" in capsys.readouterr().err
    assert main(["simulate", "--modes", "40", "--out", str(tmp_path)]) == 3
    with pytest.raises(SystemExit):
        main(["explode"])
