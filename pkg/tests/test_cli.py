import json
import subprocess
import sys

import pytest

from bitorder import __version__
from bitorder.cli import EXIT_BAND, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from bitorder.report import data_section, read_csv


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = main(list(args) + ["--out", str(out)])
    return code, out


def test_no_noc_writes_summary(tmp_path):
    code, out = run(tmp_path, "no-noc", "--precision", "fixed8", "--seed", "7", "--flits", "500")
    assert code == EXIT_OK
    echo, rows = read_csv((out / "no_noc_summary.csv").read_text())
    assert echo["seed"] == [7] and echo["version"] == __version__
    assert echo["config"]["precision"] == "fixed8"
    assert [r["seed"] for r in rows] == ["7", "all"]


def test_minimal_flits(tmp_path):
    code, out = run(tmp_path, "no-noc", "--flits", "2", "--seed", "1")
    assert code == EXIT_OK
    assert read_csv((out / "no_noc_summary.csv").read_text())[1][0]["pairs"] == "1"


def test_check_band_miss(tmp_path):
    # uniform fixed-point weights reduce by about 9%, well below the reference band
    code, _ = run(tmp_path, "no-noc", "--precision", "fixed8", "--flits", "2000", "--seed", "0", "--check")
    assert code == EXIT_BAND


def test_determinism(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(["bit-analysis", "--flits", "300", "--seed", "2", "--out", str(a)]) == EXIT_OK
    assert main(["bit-analysis", "--flits", "300", "--seed", "2", "--out", str(b)]) == EXIT_OK
    assert data_section(a.read_text()) == data_section(b.read_text())


def test_config_overrides_flags(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"precision": "fixed8", "flits": 100}))
    code, out = run(tmp_path, "no-noc", "--precision", "float32", "--config", str(cfg), "--seed", "0")
    assert code == EXIT_OK
    echo, rows = read_csv((out / "no_noc_summary.csv").read_text())
    assert echo["config"]["precision"] == "fixed8" and rows[0]["flits"] == "100"


def test_key_value_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nmax_n = 1\nmax-b=2\n")
    code, out = run(tmp_path, "verify-optimality", "--config", str(cfg))
    assert code == EXIT_OK
    body = json.loads((out / "optimality.json").read_text())
    assert body["passed"] and body["echo"]["config"]["max_b"] == 2


@pytest.mark.parametrize("args", [
    ["no-noc", "--flits", "1"],
    ["no-noc", "--weights", "zeros"],
    ["verify-optimality", "--max-n", "9"],
    ["noc-sweep", "--mesh", "hexagon", "--mcs", "x"],
    ["no-noc", "--scheme", "O9"],
])
def test_invalid_config(tmp_path, args):
    assert main(args + ["--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"colour": "red"}')
    assert main(["no-noc", "--config", str(cfg)]) == EXIT_CONFIG


def test_missing_weight_file(tmp_path):
    code = main(["no-noc", "--weights", f"file:{tmp_path}/none.bin", "--flits", "10",
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_RUNTIME


def test_sweep_cell_failures_logged(tmp_path):
    code, out = run(tmp_path, "noc-sweep", "--precision", "fixed8", "--scheme", "O1",
                    "--weights", f"file:{tmp_path}/none.bin", "--neuron-stride", "64")
    assert code == EXIT_RUNTIME
    _, rows = read_csv((out / "noc_sweep.csv").read_text())
    assert len(rows) == 2 and all(r["error"] for r in rows)


def test_sweep_reports(tmp_path):
    code, out = run(tmp_path, "noc-sweep", "--precision", "fixed8", "--scheme", "O1",
                    "--neuron-stride", "64")
    assert code == EXIT_OK
    reports = sorted(p.name for p in (out / "reports").iterdir())
    assert reports == ["lenet_fixed8_4x4_MC2_O0_s0.json", "lenet_fixed8_4x4_MC2_O1_s0.json"]
    rep = json.loads((out / "reports" / reports[0]).read_text())
    assert rep["seed"] == 0 and rep["injected_flits"] == rep["ejected_flits"]


def test_verify_optimality_stdout(capsys):
    assert main(["verify-optimality", "--max-n", "2", "--max-b", "4"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "bitorder", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
