import csv
import json
import subprocess
import sys

import pytest

from forced_escape.cli import COMMAND_SECTIONS, COMMANDS, SCHEMA, build_parser, load_config, main
from forced_escape.errors import ConfigError

pytestmark = pytest.mark.invariant


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


@pytest.mark.parametrize("command", sorted(COMMANDS))
def test_help_lists_every_knob(command, capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args([command, "--help"])
    text = capsys.readouterr().out
    for sec in COMMAND_SECTIONS[command]:
        for key, knob in SCHEMA[sec].items():
            assert f"{sec}.{key} = {knob.default!s}" in text


def test_config_round_trip(tmp_path):
    cfg = load_config("sweep", None, ["damping.gamma=0.05", "sweep.n_points=99"])
    ini = tmp_path / "c.ini"
    ini.write_text(cfg.to_ini())
    again = load_config("sweep", ini)
    assert again.resolved() == cfg.resolved()
    assert again.get("damping", "gamma") == 0.05 and again.get("sweep", "n_points") == 99


def test_unknown_keys_are_errors(tmp_path, capsys):
    with pytest.raises(ConfigError):
        load_config("sweep", None, ["sweep.n_pionts=3"])
    ini = tmp_path / "bad.ini"
    ini.write_text("[damping]\ngamma = 0.1\ngama = 0.2\n")
    assert main(["heteroclinic", "--config", str(ini), "-o", str(tmp_path / "out")]) == 2
    assert main(["heteroclinic", "--set", "nosuch.key=1", "-o", str(tmp_path / "out")]) == 2
    assert "unknown config" in capsys.readouterr().err


def test_heteroclinic_pendulum(tmp_path):
    out = tmp_path / "het"
    assert main(["heteroclinic", "--set", "model.name=pendulum", "-o", str(out)]) == 0
    m = _manifest(out)
    assert m["results"]["fw_action_uphill"] == pytest.approx(4.0, abs=4e-3)
    # every file in the run directory is referenced by the manifest
    files = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert files == set(m["outputs"])
    assert not (out / ".lock").exists()


def test_rerun_from_manifest_reproduces_checksums(tmp_path):
    out = tmp_path / "run"
    args = ["heteroclinic", "--set", "numerics.downhill=false", "-o", str(out)]
    assert main(args) == 0
    first = _manifest(out)
    saved = tmp_path / "first_manifest.json"
    saved.write_text(json.dumps(first))
    assert main(["heteroclinic", "--config", str(saved)]) == 0
    second = _manifest(out)
    assert first["resolved_config"] == second["resolved_config"]
    assert first["outputs"] == second["outputs"]


def test_lock_blocks_concurrent_runs(tmp_path):
    out = tmp_path / "locked"
    out.mkdir()
    (out / ".lock").write_text("123")
    assert main(["critical", "-o", str(out)]) == 2
    assert (out / ".lock").exists()


def test_critical_points(tmp_path):
    out = tmp_path / "crit"
    assert main(["critical", "-o", str(out)]) == 0
    pts = json.loads((out / "critical_points.json").read_text())
    locs = sorted(round(p["location"][0], 9) for p in pts)
    assert set(locs) == {-1.0, 0.0, 1.0}


def test_report_exit_codes(tmp_path):
    good, bad = tmp_path / "good", tmp_path / "bad"
    assert main(["heteroclinic", "--set", "numerics.downhill=false", "-o", str(good)]) == 0
    bad.mkdir()
    (bad / "manifest.json").write_text(json.dumps({"command": "x", "checks": [{"name": "c", "passed": False, "value": 1}]}))
    assert main(["report", "--set", f"report.runs={good}", "-o", str(tmp_path / "r1")]) == 0
    assert main(["report", "--set", f"report.runs={good},{bad}", "-o", str(tmp_path / "r2")]) == 4
    assert "FAIL: c" in (tmp_path / "r2" / "report.md").read_text()


def test_sweep_csv(tmp_path):
    out = tmp_path / "sw"
    code = main(["sweep", "--set", "sweep.n_points=60", "--set", "sweep.kinds=parametric", "-o", str(out)])
    assert code == 0
    name = next(n for n in _manifest(out)["outputs"] if n.endswith(".csv"))
    with open(out / name) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "omega" and len(rows) == 61
    assert all("." in r[0] or "e" in r[0] for r in rows[1:])


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "forced_escape.cli", "critical", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "model.seeds" in r.stdout
